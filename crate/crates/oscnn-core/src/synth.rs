//! Synthetic fixtures for training sanity checks.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{DatasetPair, Split, TimeSeriesDataset};
use crate::tensor::Tensor;

const WAVEFORM_NAMES: [&str; 3] = ["sine", "square", "saw"];

fn waveform(class: usize, angle: f64) -> f64 {
    let s = libm::sin(angle);
    match class {
        0 => s,
        1 => {
            if s >= 0.0 {
                1.0
            } else {
                -1.0
            }
        }
        _ => {
            // Sawtooth over the same fundamental.
            let phase = angle / core::f64::consts::TAU;
            2.0 * (phase - libm::floor(phase + 0.5))
        }
    }
}

/// Separable fixture of noisy periodic waveforms (sine, square, sawtooth)
/// with a random phase per sample. Up to three classes.
pub fn waveform_fixture(
    n_classes: usize,
    train_per_class: usize,
    test_per_class: usize,
    len: usize,
    seed: u64,
) -> DatasetPair {
    assert!((2..=3).contains(&n_classes), "2 or 3 waveform classes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let label_names: Vec<String> = WAVEFORM_NAMES[..n_classes]
        .iter()
        .map(|s| String::from(*s))
        .collect();
    let mut make_split = |split: Split, per_class: usize, rng: &mut ChaCha8Rng| {
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for class in 0..n_classes {
            for _ in 0..per_class {
                let phase: f64 = rng.gen_range(0.0..core::f64::consts::TAU);
                let values: Vec<f64> = (0..len)
                    .map(|t| {
                        let angle =
                            core::f64::consts::TAU * 2.0 * t as f64 / len as f64 + phase;
                        waveform(class, angle) + rng.gen_range(-0.05..0.05)
                    })
                    .collect();
                samples.push(Tensor::new(vec![1, len], values).unwrap());
                labels.push(class);
            }
        }
        TimeSeriesDataset::new(
            String::from("waveforms"),
            split,
            samples,
            labels,
            label_names.clone(),
        )
        .unwrap()
    };
    let train = make_split(Split::Train, train_per_class, &mut rng);
    let test = make_split(Split::Test, test_per_class, &mut rng);
    DatasetPair::new(train, test).unwrap()
}

/// Two-class separable fixture: noisy sine waves against square waves of the
/// same fundamental frequency.
pub fn sine_square_fixture(
    train_per_class: usize,
    test_per_class: usize,
    len: usize,
    seed: u64,
) -> DatasetPair {
    waveform_fixture(2, train_per_class, test_per_class, len, seed)
}

/// Copy of a dataset with its labels permuted; breaks any input-label
/// relation while keeping the label marginals.
pub fn shuffle_labels(ds: &TimeSeriesDataset, seed: u64) -> TimeSeriesDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    out.labels.shuffle(&mut rng);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shapes_and_determinism() {
        let a = sine_square_fixture(20, 20, 32, 7);
        assert_eq!(a.train.len(), 40);
        assert_eq!(a.test.len(), 40);
        assert_eq!(a.train.n_variates(), 1);
        assert_eq!(a.train.series_len(), Some(32));
        assert_eq!(a.train.labels.iter().filter(|&&l| l == 0).count(), 20);
        let b = sine_square_fixture(20, 20, 32, 7);
        assert_eq!(a.train.samples, b.train.samples);
    }

    #[test]
    fn three_class_fixture() {
        let pair = waveform_fixture(3, 6, 4, 24, 9);
        assert_eq!(pair.train.n_classes(), 3);
        assert_eq!(pair.train.len(), 18);
        assert_eq!(pair.test.len(), 12);
        assert_eq!(pair.train.label_names, vec!["sine", "square", "saw"]);
    }

    #[test]
    fn shuffled_labels_keep_marginals() {
        let pair = sine_square_fixture(10, 5, 16, 3);
        let shuffled = shuffle_labels(&pair.train, 1);
        assert_ne!(shuffled.labels, pair.train.labels);
        assert_eq!(
            shuffled.labels.iter().filter(|&&l| l == 0).count(),
            pair.train.labels.iter().filter(|&&l| l == 0).count()
        );
    }
}
