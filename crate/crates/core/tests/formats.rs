//! Round trips and corruption handling for the CSIR and CSIM binary formats.

use csireid::csi::{ArrayGeometry, Condition, CsiLog, CsiSample, FormatError};
use csireid::mlp::{load_model, save_model, MlpArchitecture, MlpError, MlpModel};
use csireid::{parse_log, write_log};
use num_complex::Complex32;
use proptest::prelude::*;

fn sample_strategy(geometry: ArrayGeometry) -> impl Strategy<Value = CsiSample> {
    (
        prop::collection::vec((-1e3f32..1e3, -1e3f32..1e3), geometry.n_gains()),
        -95f32..-5.0,
        any::<u64>(),
        any::<u32>(),
        0usize..5,
    )
        .prop_map(move |(h, noise, t, identity, c)| CsiSample {
            geometry,
            h: h.into_iter().map(|(re, im)| Complex32::new(re, im)).collect(),
            noise_floor_dbm: noise,
            timestamp_ns: t,
            identity,
            condition: Condition::ALL[c],
        })
}

fn log_strategy() -> impl Strategy<Value = CsiLog> {
    (1usize..4, 1usize..4, 1usize..33)
        .prop_flat_map(|(tx, rx, k)| {
            let g = ArrayGeometry::new(tx, rx, k);
            (Just(g), prop::collection::vec(sample_strategy(g), 0..24))
        })
        .prop_map(|(g, samples)| CsiLog::with_samples(g, samples))
}

fn bits(log: &CsiLog) -> Vec<(Vec<u32>, u32, u64, u32, Condition)> {
    log.samples
        .iter()
        .map(|s| {
            (
                s.h.iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect(),
                s.noise_floor_dbm.to_bits(),
                s.timestamp_ns,
                s.identity,
                s.condition,
            )
        })
        .collect()
}

fn model_strategy() -> impl Strategy<Value = MlpModel> {
    (1usize..8, 1usize..8, 1usize..8, 1usize..8, any::<u64>(), any::<u64>())
        .prop_map(|(i, a, b, c, seed, steps)| {
            let mut m = MlpModel::init(MlpArchitecture::new(i, c).with_hidden([a, b]), seed).unwrap();
            m.steps = steps;
            for (n, h) in m.hidden.iter_mut().enumerate() {
                h.running_mean.iter_mut().for_each(|v| *v = 0.25 * n as f64 - 1.0 / 3.0);
                h.running_var.iter_mut().for_each(|v| *v = 1.0 + 1.0 / 7.0);
            }
            m
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csir_round_trip_is_bit_exact(log in log_strategy()) {
        let mut bytes = Vec::new();
        let written = write_log(&log, &mut bytes).unwrap();
        prop_assert_eq!(written as usize, bytes.len());
        let parsed = parse_log(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(parsed.geometry, log.geometry);
        prop_assert_eq!(bits(&parsed), bits(&log));
        let mut again = Vec::new();
        write_log(&parsed, &mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn truncated_csir_is_rejected(log in log_strategy(), cut in any::<prop::sample::Index>()) {
        let mut bytes = Vec::new();
        write_log(&log, &mut bytes).unwrap();
        let cut = cut.index(bytes.len());
        prop_assert!(parse_log(&mut &bytes[..cut]).is_err());
    }

    #[test]
    fn csim_round_trip_is_bit_exact(model in model_strategy()) {
        let mut bytes = Vec::new();
        save_model(&model, &mut bytes).unwrap();
        let loaded = load_model(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(&loaded.arch, &model.arch);
        prop_assert_eq!(loaded.steps, model.steps);
        for (a, b) in loaded.parameters().iter().zip(model.parameters()) {
            prop_assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
        let mut again = Vec::new();
        save_model(&loaded, &mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn truncated_csim_is_rejected(model in model_strategy(), cut in any::<prop::sample::Index>()) {
        let mut bytes = Vec::new();
        save_model(&model, &mut bytes).unwrap();
        let cut = cut.index(bytes.len());
        prop_assert!(load_model(&mut &bytes[..cut]).is_err());
    }
}

#[test]
fn wrong_magic_is_reported() {
    let log = CsiLog::new(ArrayGeometry::new(1, 1, 1));
    let mut bytes = Vec::new();
    write_log(&log, &mut bytes).unwrap();
    bytes[0] = b'X';
    assert!(matches!(parse_log(&mut bytes.as_slice()), Err(FormatError::BadMagic(_))));

    let model = MlpModel::init(MlpArchitecture::new(2, 2).with_hidden([2, 2]), 1).unwrap();
    let mut bytes = Vec::new();
    save_model(&model, &mut bytes).unwrap();
    bytes[0] = b'X';
    assert!(matches!(load_model(&mut bytes.as_slice()), Err(MlpError::BadMagic(_))));
}

#[test]
fn trailing_bytes_after_a_model_are_rejected() {
    let model = MlpModel::init(MlpArchitecture::new(2, 2).with_hidden([2, 2]), 1).unwrap();
    let mut bytes = Vec::new();
    save_model(&model, &mut bytes).unwrap();
    bytes.push(0);
    assert!(matches!(load_model(&mut bytes.as_slice()), Err(MlpError::TrailingData(_))));
}
