use popcon::meanfield::{integrate_sampled, rhs, MeanFieldState};
use popcon::model::{AgentCounts, ProtocolParams};
use popcon::plot::panels;
use popcon::sim::{run_trial, TrialOptions};
use popcon::trace::{parse_trace, format_trace, read_trace, write_trace};
use proptest::prelude::*;

#[test]
fn advantages_start_at_rho() {
    let tr = integrate_sampled(&MeanFieldState::initial(5, 0.1), 2.0, 0.01, 10).unwrap();
    let adv = &panels(&tr)[2];
    let first = &adv.rows[0];
    assert_eq!(first[0], 0.0);
    for &x in &first[1..] {
        assert!((x - 0.1).abs() < 1e-12, "{x}");
    }
}

#[test]
fn late_alpha_ratio_is_ahead_of_every_bin() {
    let tr = integrate_sampled(&MeanFieldState::initial(5, 0.1), 150.0, 0.01, 100).unwrap();
    let logs = &panels(&tr)[1];
    assert_eq!(logs.omitted, 0);
    let last = logs.rows.last().unwrap();
    assert_eq!(last[0], 150.0);
    for &b in &last[2..] {
        assert!(last[1] < b, "{} !< {b}", last[1]);
    }
}

#[test]
fn random_trace_file_round_trip_and_plot() {
    let p = ProtocolParams::new(20, 2, 0.2, 3, 3.0).unwrap();
    let r = run_trial(&p, 1.0).unwrap();
    assert!(r.trace.len() >= 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.trace");
    write_trace(&r.trace, &path).unwrap();
    let back = read_trace(&path).unwrap();
    assert_eq!(back, r.trace);
    assert_eq!(format_trace(&back), std::fs::read_to_string(&path).unwrap());
    let leaders = &panels(&back)[0];
    assert_eq!(leaders.rows.len(), back.len());
}

#[test]
fn comm_windows_cover_the_run() {
    let p = ProtocolParams::new(300, 3, 0.2, 11, 40.0).unwrap();
    let r = popcon::sim::run_trial_with(&p, &TrialOptions::new(0.5).with_comm_window(2.0)).unwrap();
    for pair in r.windows.windows(2) {
        assert!((pair[0].t_end - pair[1].t_start).abs() < 1e-9);
    }
    let counted: u64 = r.windows.iter().map(|w| w.communications).sum();
    assert!(counted <= r.total_communications);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn meanfield_flow_keeps_mass_and_domain(s in 2usize..6, rho in 0.01f64..1.0, t_end in 0.5f64..30.0) {
        let tr = integrate_sampled(&MeanFieldState::initial(s, rho), t_end, 0.01, 50).unwrap();
        let layout = tr.layout();
        for snap in &tr.samples {
            prop_assert!(snap.mass_defect(&layout).abs() < 1e-12);
            let st = MeanFieldState::from_snapshot(snap, s);
            prop_assert!(st.check_domain().is_ok());
            prop_assert!(st.alpha() + st.delta() <= 1.0 / s as f64 + 1e-12);
        }
    }

    #[test]
    fn census_states_are_in_the_domain(n_over_s in 2u64..200, s in 2usize..8, rho in 0.001f64..1.0) {
        let p = ProtocolParams::new(n_over_s * s as u64, s, rho, 0, 1.0).unwrap();
        let c = AgentCounts::init_population(&p).unwrap();
        let st = MeanFieldState::from_counts(&c, 0.0);
        prop_assert!(rhs(&st).is_ok());
    }

    #[test]
    fn trace_text_round_trips(seed in any::<u64>(), rho in 0.05f64..1.0) {
        let p = ProtocolParams::new(40, 2, rho, seed, 2.0).unwrap();
        let r = run_trial(&p, 0.25).unwrap();
        let text = format_trace(&r.trace);
        let back = parse_trace(&text, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back, r.trace);
    }
}
