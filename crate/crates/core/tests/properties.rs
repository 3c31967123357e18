//! Invariants of the schemes over random small instances.

use proptest::prelude::*;
use tdbeam::channel::{sample_channels, ChannelModelParams};
use tdbeam::schemes::{evaluate, isotropic, multibeam, tdma, time_division};
use tdbeam::{AlgorithmSettings, ChannelSet, EhParams, Schedule, SchemeKind, Slot};

fn instance(k: usize, m: usize, seed: u64) -> ChannelSet {
    let model = ChannelModelParams { num_ers: k, ..ChannelModelParams::default().with_antennas(m) };
    sample_channels(&model, seed).unwrap()
}

fn check_schedule(s: &Schedule, p: f64, t: f64) {
    s.check().unwrap();
    assert!((s.durations().iter().sum::<f64>() - t).abs() <= 1e-9 * t);
    for c in s.covariances() {
        assert!(c.trace() <= p * (1.0 + 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn baselines_order_and_scale(k in 2usize..6, m in 1usize..5, seed in 0u64..1000, dbm in 30.0f64..48.0, t in 0.1f64..5.0) {
        let ch = instance(k, m, seed);
        let eh = EhParams::default();
        let p = 10f64.powf((dbm - 30.0) / 10.0);
        let (s_mb, mb) = multibeam(&ch, p, t, &eh).unwrap();
        let (s_iso, iso) = isotropic(m, p, t, &ch, &eh).unwrap();
        let (s_td, td) = tdma(&ch, p, t, &eh).unwrap();
        for s in [&s_mb, &s_iso, &s_td] {
            check_schedule(s, p, t);
        }
        prop_assert!(mb.min_dc_energy >= iso.min_dc_energy - 1e-9 * t);
        // Energies are linear in the block length.
        let (_, mb1) = multibeam(&ch, p, 1.0, &eh).unwrap();
        let (_, td1) = tdma(&ch, p, 1.0, &eh).unwrap();
        prop_assert!((mb.min_dc_energy - t * mb1.min_dc_energy).abs() <= 1e-9 * t);
        prop_assert!((td.min_dc_energy - t * td1.min_dc_energy).abs() <= 1e-9 * t);
    }

    #[test]
    fn multibeam_ignores_receiver_order(k in 2usize..6, seed in 0u64..1000) {
        let ch = instance(k, 3, seed);
        let eh = EhParams::default();
        let perm: Vec<usize> = (0..k).rev().collect();
        let (_, a) = multibeam(&ch, 5.0, 1.0, &eh).unwrap();
        let (_, b) = multibeam(&ch.permuted(&perm).unwrap(), 5.0, 1.0, &eh).unwrap();
        prop_assert!((a.min_dc_energy - b.min_dc_energy).abs() <= 1e-5 * a.min_dc_energy.max(1e-9));
    }

    #[test]
    fn evaluation_is_slot_order_invariant(k in 2usize..5, seed in 0u64..1000) {
        let ch = instance(k, 3, seed);
        let eh = EhParams::default();
        let (s, r) = tdma(&ch, 8.0, 1.0, &eh).unwrap();
        let mut slots: Vec<Slot> = s.slots().to_vec();
        slots.reverse();
        let rev = evaluate(&Schedule::new(slots, 1.0).unwrap(), &ch, &eh).unwrap();
        prop_assert!((rev.min_dc_energy - r.min_dc_energy).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn time_division_dominates_and_is_monotone(k in 2usize..5, m in 2usize..4, seed in 0u64..1000, dbm in 34.0f64..46.0) {
        let ch = instance(k, m, seed);
        let eh = EhParams::default();
        let p = 10f64.powf((dbm - 30.0) / 10.0);
        let (s, r) = time_division(&ch, p, 1.0, &eh, &AlgorithmSettings::default()).unwrap();
        check_schedule(&s, p, 1.0);
        let (_, mb) = multibeam(&ch, p, 1.0, &eh).unwrap();
        let (_, td) = tdma(&ch, p, 1.0, &eh).unwrap();
        prop_assert!(r.min_dc_energy >= mb.min_dc_energy.max(td.min_dc_energy) - 1e-6);
        prop_assert!(r.objective_trace.windows(2).all(|w| w[1] > w[0]));
        let again = evaluate(&s, &ch, &eh).unwrap();
        prop_assert!((again.min_dc_energy - r.min_dc_energy).abs() <= 1e-12);
    }
}

#[test]
fn scheme_names_parse() {
    for k in SchemeKind::ALL {
        assert_eq!(k.to_string().parse::<SchemeKind>().unwrap(), k);
    }
    assert!("beamforming".parse::<SchemeKind>().is_err());
}
