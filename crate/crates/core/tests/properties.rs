use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rsma_vlc::optimizer::zf_precoder;
use rsma_vlc::signal_model::FEASIBILITY_TOL;
use rsma_vlc::{ao_solve, ao_solve_with_budget, assemble_report, build_layout, AoConfig, ChannelMatrix, Precoder, Scheme};

fn channel(gains: &[f64], users: usize, noise: f64) -> ChannelMatrix {
    let leds = gains.len() / users;
    ChannelMatrix::new(DMatrix::from_row_slice(users, leds, gains), DVector::from_element(users, noise)).unwrap()
}

fn gains(users: usize, leds: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, users * leds)
}

fn precoder(leds: usize, streams: usize) -> impl Strategy<Value = Precoder> {
    prop::collection::vec(-1.0f64..1.0, leds * streams).prop_map(move |v| Precoder::new(DMatrix::from_vec(leds, streams, v)))
}

proptest! {
    #[test]
    fn rsma_with_idle_common_stream_is_sdma(g in gains(2, 3), p in precoder(3, 2)) {
        let ch = channel(&g, 2, 1.0);
        let sdma = build_layout(Scheme::Sdma, 2, &ch).unwrap();
        let rsma = build_layout(Scheme::Rsma, 2, &ch).unwrap();
        let mut padded = DMatrix::zeros(3, 3);
        for k in 0..2 {
            padded.set_column(rsma.private_index(k).unwrap(), &p.matrix.column(sdma.private_index(k).unwrap()));
        }
        let a = assemble_report(&ch, &p, &sdma, None, &[0.5, 0.5]).unwrap();
        let b = assemble_report(&ch, &Precoder::new(padded), &rsma, None, &[0.5, 0.5]).unwrap();
        prop_assert_eq!(a.wsr, b.wsr);
        prop_assert_eq!(a.overall, b.overall);
    }

    #[test]
    fn report_is_self_consistent(g in gains(2, 2), p in precoder(2, 3), w1 in 0.1f64..0.9, noma in any::<bool>()) {
        let ch = channel(&g, 2, 0.5);
        let scheme = if noma { Scheme::Noma } else { Scheme::Rsma };
        let layout = build_layout(scheme, 2, &ch).unwrap();
        let p = if noma { Precoder::new(p.matrix.columns(0, 2).into_owned()) } else { p };
        let w = [w1, 1.0 - w1];
        let r = assemble_report(&ch, &p, &layout, None, &w).unwrap();
        let total: f64 = r.common_shares.iter().sum();
        prop_assert!(r.common_shares.iter().all(|c| *c >= 0.0));
        prop_assert!(total <= r.common_cap + FEASIBILITY_TOL);
        for k in 0..2 {
            prop_assert_eq!(r.overall[k], r.common_shares[k] + r.private_rate[k]);
        }
        let wsr: f64 = (0..2).map(|k| w[k] * r.overall[k]).sum();
        prop_assert!((wsr - r.wsr).abs() <= 1e-12 * wsr.max(1.0));
    }

    #[test]
    fn rates_depend_on_channel_times_budget_only(g in gains(2, 2), p in precoder(2, 3), c in 0.01f64..100.0) {
        let ch = channel(&g, 2, 1.0);
        let scaled = channel(&g.iter().map(|v| v * c).collect::<Vec<_>>(), 2, 1.0);
        let layout = build_layout(Scheme::Rsma, 2, &ch).unwrap();
        let a = assemble_report(&ch, &p, &layout, None, &[0.5, 0.5]).unwrap();
        let b = assemble_report(&scaled, &Precoder::new(&p.matrix / c), &layout, None, &[0.5, 0.5]).unwrap();
        prop_assert!((a.wsr - b.wsr).abs() <= 1e-9 * a.wsr.max(1.0));
    }

    #[test]
    fn zero_forcing_nulls_and_fits_budget(g in gains(2, 3), eps in 0.1f64..10.0) {
        let ch = channel(&g, 2, 1.0);
        prop_assume!((&ch.gains * ch.gains.transpose()).determinant().abs() > 1e-3);
        let p = zf_precoder(&ch, eps);
        prop_assert!(p.is_feasible(eps));
        prop_assert!((p.max_row_l1() - eps).abs() <= 1e-9 * eps);
        for k in 0..2 {
            for j in 0..2 {
                let v = ch.project(k, p.column(j));
                if j == k {
                    prop_assert!(v.abs() > 0.0);
                } else {
                    prop_assert!(v.abs() <= 1e-9, "leak {}", v);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rsma_dominates_and_ao_stays_feasible(g in gains(2, 3), snr in 0.0f64..30.0, seed in 0u64..1000) {
        let ch = channel(&g, 2, 1.0);
        let eps = 10f64.powf(snr / 20.0);
        let config = AoConfig { seed, ..AoConfig::default() };
        let mut best = [0.0; 3];
        for (i, scheme) in Scheme::ALL.into_iter().enumerate() {
            let layout = build_layout(scheme, 2, &ch).unwrap();
            let sol = ao_solve_with_budget(&ch, &layout, &[0.5, 0.5], eps, &config).unwrap();
            prop_assert!(sol.precoder.is_feasible(eps));
            for w in sol.wsr_history.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-8);
            }
            best[i] = sol.report.wsr;
        }
        prop_assert!(best[0] >= best[1] - 1e-9, "RSMA {} < SDMA {}", best[0], best[1]);
        prop_assert!(best[0] >= best[2] - 1e-9, "RSMA {} < NOMA {}", best[0], best[2]);
    }
}

#[test]
fn three_users_four_leds() {
    let ch = channel(&[0.9, 0.2, 0.1, 0.3, 0.2, 0.8, 0.3, 0.1, 0.1, 0.3, 0.7, 0.6], 3, 1.0);
    let config = AoConfig { snr_db: 15.0, ..AoConfig::default() };
    let eps = config.epsilon(&ch).unwrap();
    let rsma = ao_solve(&ch, &build_layout(Scheme::Rsma, 3, &ch).unwrap(), &[0.2, 0.3, 0.5], &config).unwrap();
    let sdma = ao_solve(&ch, &build_layout(Scheme::Sdma, 3, &ch).unwrap(), &[0.2, 0.3, 0.5], &config).unwrap();
    assert!(rsma.precoder.is_feasible(eps));
    assert!(sdma.precoder.is_feasible(eps));
    assert!(rsma.report.wsr >= sdma.report.wsr - 1e-9);
    assert_eq!(rsma.report.overall.len(), 3);
    assert!(build_layout(Scheme::Noma, 3, &ch).is_err());
}

#[test]
fn ao_is_deterministic() {
    let ch = channel(&[0.8, 0.4, 0.5, 0.7], 2, 1.0);
    let layout = build_layout(Scheme::Rsma, 2, &ch).unwrap();
    let config = AoConfig { snr_db: 25.0, seed: 3, ..AoConfig::default() };
    let a = ao_solve(&ch, &layout, &[0.5, 0.5], &config).unwrap();
    let b = ao_solve(&ch, &layout, &[0.5, 0.5], &config).unwrap();
    assert_eq!(a, b);
}
