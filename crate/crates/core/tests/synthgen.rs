use std::fs;
use std::path::Path;

use banet::data::{load_dataset, segment_dataset, Cohort, Label, SegmentConfig};
use banet::rng::stream;
use banet::synth::{
    generate, generate_dataset, generate_instance, read_ground_truth, simulate_raters, SubjectProfile, SynthConfig,
};
use rustfft::{num_complex::Complex, FftPlanner};

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn default_dataset_loads_and_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = SynthConfig::default();
    let (ds, truth) = generate_dataset(&cfg, a.path()).unwrap();
    generate_dataset(&cfg, b.path()).unwrap();
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
    assert_eq!(dir_bytes(a.path()).len(), 14);

    let loaded = load_dataset(a.path()).unwrap();
    assert_eq!(loaded, ds);
    assert_eq!(loaded.subjects().len(), 12);
    assert_eq!(loaded.instances.len(), 12);
    let back = read_ground_truth(a.path()).unwrap();
    assert_eq!(back.len(), truth.len());
    for g in &truth {
        assert!(back.contains(g));
        if g.cohort == Cohort::Healthy {
            assert!(g.mask.iter().all(|&m| m == 0));
        }
    }
    for inst in &loaded.instances {
        assert_eq!(inst.activities.len(), 5);
        if inst.cohort == Cohort::Healthy {
            assert!(inst.raters.iter().all(|r| r == &[0; 4]));
        }
    }

    let other = SynthConfig { seed: 8, ..cfg };
    assert_ne!(generate(&other).unwrap().0, ds);
}

/// Power of the positive-frequency bins in `(lo, hi]` Hz, up to a constant window gain.
fn band_power(x: &[f64], fs_hz: f64, lo: f64, hi: f64) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    // Hann taper against leakage from the slow baseline motion.
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos();
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (1..n / 2)
        .filter(|&k| {
            let f = k as f64 * fs_hz / n as f64;
            f > lo && f <= hi
        })
        .map(|k| 2.0 * buf[k].norm_sqr())
        .sum::<f64>()
        / (n * n) as f64
}

fn power_above(x: &[f64], fs_hz: f64, cutoff: f64) -> f64 {
    band_power(x, fs_hz, cutoff, f64::INFINITY)
}

/// Variance of the movement band (below 4 Hz), i.e. with the tremor band removed.
fn movement_variance(x: &[f64]) -> f64 {
    band_power(x, 60.0, 0.0, 4.0)
}

#[test]
fn forced_interval_carries_the_signature() {
    let cfg = SynthConfig::default();
    let profile = SubjectProfile {
        subject_id: "P99".into(),
        cohort: Cohort::Patient,
        planted_parts: vec![4, 9],
        forced_intervals: Some(vec![(600, 900)]),
    };
    for seed in 0..5 {
        let mut rng = stream(seed, &[]);
        let (inst, gt) = generate_instance(&cfg, &profile, "T1", &mut rng).unwrap();
        assert!(gt.mask[600..900].iter().all(|&m| m == 1));
        assert_eq!(gt.mask.iter().map(|&m| m as usize).sum::<usize>(), 300);
        for &part in &profile.planted_parts {
            let theta: Vec<f64> = (0..inst.len()).map(|t| inst.angle(t, part)).collect();
            let inside = &theta[600..900];
            // Equal-length windows away from the interval.
            let outside: Vec<&[f64]> = (0..)
                .map(|i| 1200 + 300 * i)
                .take_while(|s| s + 300 <= theta.len())
                .map(|s| &theta[s..s + 300])
                .collect();
            assert!(outside.len() >= 3);
            let var_out = outside.iter().map(|w| movement_variance(w)).sum::<f64>() / outside.len() as f64;
            let hf_out = outside.iter().map(|w| power_above(w, 60.0, 4.0)).sum::<f64>() / outside.len() as f64;
            assert!(movement_variance(inside) < var_out, "seed {seed} part {part}: {} vs {var_out} {:?}", movement_variance(inside), outside.iter().map(|w| movement_variance(w)).collect::<Vec<_>>());
            assert!(power_above(inside, 60.0, 4.0) > 10.0 * hf_out, "seed {seed} part {part}: hf {} vs {hf_out}", power_above(inside, 60.0, 4.0));
        }
        // Unplanted parts are untouched by the signature.
        let theta: Vec<f64> = (0..inst.len()).map(|t| inst.angle(t, 0)).collect();
        assert!(power_above(&theta[600..900], 60.0, 4.0) < 5.0 * power_above(&theta[1200..1500], 60.0, 4.0));
    }
}

#[test]
fn healthy_instances_are_clean_and_seeded() {
    let cfg = SynthConfig::default();
    let h = &cfg.profiles()[8];
    let (a, ga) = generate_instance(&cfg, h, "T1", &mut stream(3, &[])).unwrap();
    let (b, gb) = generate_instance(&cfg, h, "T1", &mut stream(3, &[])).unwrap();
    assert_eq!(a, b);
    assert_eq!(ga, gb);
    assert!(ga.mask.iter().all(|&m| m == 0));
    assert!(a.raters.iter().all(|r| r == &[0; 4]));
    assert!(a.validate().is_ok());
}

/// Monte-Carlo oracle for the default rater noise: the per-sample 2-of-4 vote
/// agrees with the mask on at least 95% of samples.
#[test]
fn rater_vote_agreement() {
    let (_, truth) = generate(&SynthConfig::default()).unwrap();
    let mut agreement = Vec::new();
    for (i, g) in truth.iter().filter(|g| g.cohort == Cohort::Patient).enumerate() {
        for rep in 0..20u64 {
            let mut rng = stream(1000 + rep, &[i as u64]);
            let r = simulate_raters(&g.mask, Cohort::Patient, &mut rng, 0.05, 30).unwrap();
            let agree = r
                .iter()
                .zip(&g.mask)
                .filter(|(row, &m)| ((row.iter().map(|&x| x as usize).sum::<usize>() >= 2) as u8) == m)
                .count();
            agreement.push(agree as f64 / g.mask.len() as f64);
        }
    }
    let mean = agreement.iter().sum::<f64>() / agreement.len() as f64;
    assert!(mean >= 0.95, "{mean}");
}

#[test]
fn protective_share_tracks_the_configured_fraction() {
    let cfg = SynthConfig::default();
    let (ds, truth) = generate(&cfg).unwrap();
    let segs = segment_dataset(&ds, &SegmentConfig::default()).unwrap();
    let patient: Vec<_> = segs.iter().filter(|s| s.cohort == Cohort::Patient).collect();
    let share = patient.iter().filter(|s| s.label == Label::Protective).count() as f64 / patient.len() as f64;
    // Window geometry biases the share upwards by a few points.
    assert!((share - cfg.protective_fraction).abs() <= 0.1, "{share}");
    assert!(share >= cfg.protective_fraction);
    assert!(segs.iter().filter(|s| s.cohort == Cohort::Healthy).all(|s| s.label == Label::NonProtective));

    // With noiseless raters the labels follow the mask exactly.
    let quiet = SynthConfig { rater_flip_p: 0.0, rater_jitter: 0, ..cfg };
    let (ds, truth2) = generate(&quiet).unwrap();
    assert_eq!(truth.len(), truth2.len());
    for s in segment_dataset(&ds, &SegmentConfig::default()).unwrap() {
        let g = truth2.iter().find(|g| g.instance_id == s.instance_id).unwrap();
        let hits = g.mask[s.start..s.start + s.unpadded_len].iter().filter(|&&m| m == 1).count();
        let expect = if 2 * hits >= s.unpadded_len { Label::Protective } else { Label::NonProtective };
        assert_eq!(s.label, expect);
    }
}
