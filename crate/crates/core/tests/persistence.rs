//! On-disk formats: round trips and corruption handling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voiceforge::archive::{FrontEnd, Model, ModelArchive};
use voiceforge::audio::{read_wav, write_wav, Waveform};
use voiceforge::features::{FeatureMatrix, MfccConfig, MvnStats};
use voiceforge::nn::{DblstmNetwork, DnnClassifier};
use voiceforge::vocoder::{analyze, AcousticAnalysis, VocoderConfig};
use voiceforge::Error;

fn classifier_archive() -> ModelArchive {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let fe = FrontEnd { mfcc: MfccConfig::default(), context_left: 8, context_right: 8 };
    let norm = MvnStats { mean: (0..221).map(|i| i as f64 * 0.01).collect(), std: vec![1.5; 221] };
    ModelArchive::new(Model::Classifier(DnnClassifier::random(221, &[12, 10], 39, &mut rng)), Some(fe), Some(norm), None).unwrap()
}

fn regressor_archive() -> ModelArchive {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let norm = MvnStats { mean: vec![-0.5; 40], std: vec![0.25; 40] };
    ModelArchive::new(Model::Regressor(DblstmNetwork::random(39, 6, 2, 40, &mut rng)), None, None, Some(norm)).unwrap()
}

#[test]
fn archives_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    for (name, a) in [("asr.vfm", classifier_archive()), ("vc.vfm", regressor_archive())] {
        let path = dir.path().join(name);
        a.save(&path).unwrap();
        let back = ModelArchive::load(&path).unwrap();
        assert_eq!(back, a);
        assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes());
    }
}

#[test]
fn every_single_byte_corruption_is_rejected() {
    let bytes = regressor_archive().to_bytes();
    for i in 0..bytes.len() {
        let mut bad = bytes.clone();
        bad[i] ^= 0x10;
        match ModelArchive::from_bytes(&bad) {
            Err(Error::VersionMismatch { .. }) => assert!(i < 8, "byte {i}"),
            Err(Error::Corrupt(_)) => assert!((8..16).contains(&i), "byte {i}"),
            Err(Error::ChecksumMismatch { .. }) => assert!(i >= 16, "byte {i}"),
            other => panic!("byte {i}: {other:?}"),
        }
    }
}

#[test]
fn damaged_archive_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.vfm");
    let a = classifier_archive();
    a.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(ModelArchive::load(&path), Err(Error::Corrupt(_))));

    let mut wrong = bytes.clone();
    wrong[..4].copy_from_slice(b"FMAT");
    std::fs::write(&path, &wrong).unwrap();
    match ModelArchive::load(&path) {
        Err(Error::VersionMismatch { expected, found }) => {
            assert!(expected.contains("VFM1") && found.contains("FMAT"));
        }
        other => panic!("{other:?}"),
    }

    let mut flipped = bytes;
    let mid = flipped.len() / 2;
    flipped[mid] ^= 1;
    std::fs::write(&path, &flipped).unwrap();
    assert!(matches!(ModelArchive::load(&path), Err(Error::ChecksumMismatch { .. })));

    assert!(matches!(ModelArchive::load(dir.path().join("absent.vfm")), Err(Error::NotFound(_))));
}

#[test]
fn feature_matrix_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.fmat");
    let m = FeatureMatrix::new((0..60).map(|i| (i as f64 * 0.7).sin() * 1e3).collect(), 12, 5, 0.005).unwrap().quantized();
    m.save(&path).unwrap();
    assert_eq!(FeatureMatrix::load(&path).unwrap(), m);

    let bytes = std::fs::read(&path).unwrap();
    assert!(matches!(FeatureMatrix::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Corrupt(_))));
    assert!(matches!(FeatureMatrix::from_bytes(&bytes[..10]), Err(Error::Corrupt(_))));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(FeatureMatrix::from_bytes(&extra), Err(Error::Corrupt(_))));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(FeatureMatrix::from_bytes(&magic), Err(Error::VersionMismatch { .. })));
    let mut version = bytes;
    version[4] = 9;
    assert!(matches!(FeatureMatrix::from_bytes(&version), Err(Error::VersionMismatch { .. })));
    assert!(matches!(FeatureMatrix::load(dir.path().join("none.fmat")), Err(Error::NotFound(_))));
}

#[test]
fn acoustic_analysis_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let w = Waveform::new((0..6000).map(|i| (i as f64 * 0.09).sin() * 0.5).collect(), 16_000).unwrap();
    let a = analyze(&w, &VocoderConfig::default()).unwrap();
    let base = dir.path().join("utt");
    a.save(&base).unwrap();
    let back = AcousticAnalysis::load(&base).unwrap();
    assert_eq!(back.frames(), a.frames());
    assert_eq!(back.f0.values, a.f0.values.iter().map(|&v| v as f32 as f64).collect::<Vec<_>>());
    assert_eq!(back.ap.ratios, a.ap.ratios.quantized());
    assert_eq!(back.mcep.coeffs, a.mcep.coeffs.quantized());
    assert_eq!((back.mcep.alpha, back.mcep.bins, back.sample_rate, back.num_samples), (a.mcep.alpha, a.mcep.bins, a.sample_rate, a.num_samples));
    assert_eq!(back.ap.band_edges, a.ap.band_edges);
}

#[test]
fn wav_round_trip_within_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.wav");
    let w = Waveform::new((0..3000).map(|i| (i as f64 * 0.013).sin() * 0.99).collect(), 22_050).unwrap();
    assert_eq!(write_wav(&path, &w).unwrap().clipped, 0);
    let back = read_wav(&path).unwrap();
    assert_eq!((back.len(), back.sample_rate()), (3000, 22_050));
    assert!(back.samples().iter().zip(w.samples()).all(|(a, b)| (a - b).abs() <= 1.0 / 32768.0));

    std::fs::write(&path, b"RIFF\x00\x00").unwrap();
    assert!(matches!(read_wav(&path), Err(Error::CorruptHeader(_))));
    assert!(matches!(read_wav(dir.path().join("missing.wav")), Err(Error::NotFound(_))));
}
