//! Generation determinism, degradation contracts (identity at zero,
//! measured noise statistics, blur smoothing), and storage round-trips.

use vdq_corpus::{
    apply_degradation, generate_base, generate_corpus, read_corpus, write_corpus, CorpusConfig,
    CorpusError, DegradationKind, DegradationSpec,
};
use vdq_tensor::Tensor;

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn base_video_is_deterministic_moving_and_in_range() {
    let a = generate_base(7, 8, 96);
    let b = generate_base(7, 8, 96);
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.shape(), &[3, 8, 96, 96]);
    assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));

    // motion: consecutive frames differ
    let plane = 96 * 96;
    for t in 0..7 {
        let mut diff = 0.0;
        for c in 0..3 {
            let base = c * 8 * plane;
            for i in 0..plane {
                diff += (a.data()[base + t * plane + i] - a.data()[base + (t + 1) * plane + i])
                    .abs();
            }
        }
        assert!(diff > 0.0, "frames {t} and {} identical", t + 1);
    }

    // different seeds give different content
    let c = generate_base(8, 8, 96);
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn severity_zero_is_bit_exact_identity_for_every_kind() {
    let video = generate_base(3, 4, 96);
    for kind in DegradationKind::ALL {
        let out = apply_degradation(&video, &DegradationSpec { kind, severity: 0.0 }, 99).unwrap();
        assert_eq!(bits(&video), bits(&out), "{kind:?} not identity at 0");
    }
}

#[test]
fn degradations_are_deterministic_given_seed() {
    let video = generate_base(4, 4, 96);
    for kind in DegradationKind::ALL {
        let spec = DegradationSpec { kind, severity: 0.6 };
        let a = apply_degradation(&video, &spec, 5).unwrap();
        let b = apply_degradation(&video, &spec, 5).unwrap();
        assert_eq!(bits(&a), bits(&b));
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn noise_residual_std_matches_severity_map() {
    // severity 0.25 -> std 0.05; content range leaves clipping negligible
    let video = generate_base(11, 8, 96);
    let spec = DegradationSpec {
        kind: DegradationKind::GaussianNoise,
        severity: 0.25,
    };
    let noisy = apply_degradation(&video, &spec, 123).unwrap();
    let n = video.len() as f64;
    let mean: f64 = noisy
        .data()
        .iter()
        .zip(video.data().iter())
        .map(|(a, b)| a - b)
        .sum::<f64>()
        / n;
    let var: f64 = noisy
        .data()
        .iter()
        .zip(video.data().iter())
        .map(|(a, b)| {
            let d = a - b - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    let want = 0.2 * 0.25;
    assert!(
        (std - want).abs() / want < 0.05,
        "measured std {std}, expected {want} within 5%"
    );
}

fn total_variation(t: &Tensor) -> f64 {
    let (c, n, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]);
    let plane = h * w;
    let mut tv = 0.0;
    for p in 0..c * n {
        let d = &t.data()[p * plane..(p + 1) * plane];
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    tv += (d[y * w + x + 1] - d[y * w + x]).abs();
                }
                if y + 1 < h {
                    tv += (d[(y + 1) * w + x] - d[y * w + x]).abs();
                }
            }
        }
    }
    tv
}

#[test]
fn blur_reduces_total_variation() {
    let video = generate_base(13, 4, 96);
    for sev in [0.3, 0.7, 1.0] {
        let spec = DegradationSpec {
            kind: DegradationKind::GaussianBlur,
            severity: sev,
        };
        let blurred = apply_degradation(&video, &spec, 1).unwrap();
        assert!(
            total_variation(&blurred) < total_variation(&video),
            "blur at severity {sev} did not smooth the video"
        );
    }
}

#[test]
fn severity_out_of_range_panics() {
    let spec = DegradationSpec {
        kind: DegradationKind::GaussianBlur,
        severity: 1.5,
    };
    assert!(std::panic::catch_unwind(move || {
        let video = generate_base(1, 2, 96);
        apply_degradation(&video, &spec, 0)
    })
    .is_err());
}

#[test]
fn corpus_roundtrip_and_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CorpusConfig {
        videos: 5,
        frames: 4,
        size: 96,
        seed: 42,
    };
    let samples = generate_corpus(&cfg).unwrap();
    assert_eq!(samples.len(), 5);
    for s in &samples {
        assert!((1.0..=5.0).contains(&s.mos));
        assert!(s.degradations.len() <= 2);
    }
    let manifest = write_corpus(dir.path(), cfg.seed, &samples).unwrap();
    assert_eq!(manifest.entries.len(), 5);

    let reader = read_corpus(dir.path()).unwrap();
    assert_eq!(reader.len(), 5);
    for (id, sample) in samples.iter().enumerate() {
        let loaded = reader.load_video(id).unwrap();
        assert_eq!(bits(&loaded), bits(&sample.frames));
        assert_eq!(reader.entry(id).mos, sample.mos);
    }

    // corrupt one payload byte -> checksum error
    let victim = dir.path().join(&reader.entry(2).file);
    let mut bytes = std::fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    std::fs::write(&victim, bytes).unwrap();
    match reader.load_video(2) {
        Err(CorpusError::Checksum(f)) => assert!(f.contains("0002")),
        other => panic!("expected checksum error, got {other:?}"),
    }

    // ids unique
    let mut ids: Vec<_> = manifest.entries.iter().map(|e| e.id).collect();
    ids.dedup();
    assert_eq!(ids.len(), 5);
}

#[test]
fn corpus_regeneration_is_byte_identical() {
    let cfg = CorpusConfig {
        videos: 4,
        frames: 4,
        size: 96,
        seed: 101,
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    write_corpus(d1.path(), cfg.seed, &generate_corpus(&cfg).unwrap()).unwrap();
    write_corpus(d2.path(), cfg.seed, &generate_corpus(&cfg).unwrap()).unwrap();
    for name in ["manifest.json", "videos/0000.dvt", "videos/0003.dvt"] {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between regenerations");
    }
}

#[test]
fn missing_file_and_version_mismatch_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CorpusConfig {
        videos: 2,
        frames: 2,
        size: 96,
        seed: 1,
    };
    write_corpus(dir.path(), cfg.seed, &generate_corpus(&cfg).unwrap()).unwrap();

    // delete a video file
    std::fs::remove_file(dir.path().join("videos/0001.dvt")).unwrap();
    assert!(read_corpus(dir.path()).is_err());

    // rewrite manifest with a bogus version
    let manifest_path = dir.path().join("manifest.json");
    let json = std::fs::read_to_string(&manifest_path).unwrap();
    std::fs::write(&manifest_path, json.replace("\"v1\"", "\"v9\"")).unwrap();
    match read_corpus(dir.path()) {
        Err(CorpusError::Version { found, .. }) => assert_eq!(found, "v9"),
        Err(other) => panic!("expected version error, got {other:?}"),
        Ok(_) => panic!("expected version error, got a reader"),
    }
}
