//! Whole-session analysis on synthetic sessions with known structure.

use drivepat::pipeline::{
    cooccurrence, map_states_to_segments, run_pipeline, run_sessions, write_outputs, KinematicMode, PipelineConfig,
};
use drivepat::synth::{gen_coupled_session, CoupledSpec};
use drivepat::Exec;
use proptest::prelude::*;

/// Settings that keep a session under a second or two.
fn quick() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.segmentation.sweeps = 150;
    cfg.segmentation.burn_in = 30;
    cfg.gmm.restarts = 2;
    cfg.gmm.max_iter = 60;
    cfg.behavior.words = 20;
    cfg.behavior.iters = 300;
    cfg.behavior.burn_in = 100;
    cfg.states.words = 10;
    cfg.states.iters = 300;
    cfg.states.burn_in = 100;
    cfg.gaze.window_s = 60.0;
    cfg
}

fn spec(seed: u64) -> CoupledSpec {
    CoupledSpec {
        seed,
        participant_id: format!("p{seed}"),
        duration_s: 300.0,
        imu_rate_hz: 5.0,
        gaze_rate_hz: 5.0,
        ..Default::default()
    }
}

#[test]
fn report_invariants_hold() {
    let (session, _) = gen_coupled_session(&spec(1)).unwrap();
    let a = run_pipeline(&session, &quick()).unwrap();
    let r = &a.report;
    assert_eq!(r.meta.mode, KinematicMode::Imu);

    // every matrix sample lies in exactly one segment
    for &t in &a.matrix_times {
        let hits = r.segments.iter().filter(|s| s.start_t <= t && t < s.end_t).count();
        assert_eq!(hits, 1, "t = {t}");
    }
    assert_eq!(r.segments.len(), r.behavior.assignments.len());
    for (i, s) in r.segments.iter().enumerate() {
        assert_eq!(s.id, i);
        assert_eq!(r.behavior.assignments[i].segment_id, i);
    }

    let tm = r.transitions.as_ref().unwrap();
    assert_eq!(tm.probs.len(), r.behavior.topics);
    for (row, counts) in tm.probs.iter().zip(&tm.counts) {
        assert_eq!(row.len(), r.behavior.topics);
        if counts.iter().sum::<u64>() > 0 {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
    assert_eq!(r.cooccurrence.len(), 2);
    for c in &r.cooccurrence {
        for (row, counts) in c.fractions.iter().zip(&c.counts) {
            if counts.iter().sum::<u64>() > 0 {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
    for s in &r.styles.summaries {
        for f in [s.fraction_abnormal_hr, s.fraction_high_gte].into_iter().flatten() {
            assert!((0.0..=1.0).contains(&f));
        }
    }
    assert!(r.tests.iter().all(|t| (0.0..=1.0).contains(&t.p_value)));

    let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    for k in ["meta", "segments", "behavior", "states", "tests", "transitions", "cooccurrence", "styles"] {
        assert!(keys.contains(&k), "missing `{k}`");
    }
}

#[test]
fn execution_modes_give_identical_reports() {
    let (session, _) = gen_coupled_session(&spec(2)).unwrap();
    let seq = PipelineConfig {
        exec: Exec::Sequential,
        ..quick()
    };
    let par = PipelineConfig {
        exec: Exec::Parallel,
        ..quick()
    };
    let a = run_pipeline(&session, &seq).unwrap().report;
    let b = run_pipeline(&session, &par).unwrap().report;
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn speed_only_sessions_segment_speed_and_its_gradient() {
    let s = CoupledSpec {
        include_imu: false,
        include_gaze: false,
        ..spec(3)
    };
    let (session, _) = gen_coupled_session(&s).unwrap();
    let a = run_pipeline(&session, &quick()).unwrap();
    let r = &a.report;
    assert_eq!(r.meta.mode, KinematicMode::Speed);
    assert_eq!(r.meta.kinematic_channels, vec!["speed", "speed_accel"]);
    assert_eq!(r.meta.segment_rate_hz, 1.0);
    assert_eq!(r.styles.accel_channel, "speed_accel");
    assert_eq!(r.states.len(), 1);
    assert!(r.meta.warnings.iter().any(|w| w.contains("gaze")));
}

#[test]
fn disabled_gaze_leaves_no_gaze_sections() {
    let s = CoupledSpec {
        include_gaze: false,
        ..spec(4)
    };
    let (session, _) = gen_coupled_session(&s).unwrap();
    let mut cfg = quick();
    cfg.gaze.enabled = false;
    let r = run_pipeline(&session, &cfg).unwrap().report;
    assert!(r.states.iter().all(|s| s.modality != "gte"));
    assert!(r.cooccurrence.iter().all(|c| c.modality != "gte"));
    assert!(r.styles.summaries.iter().all(|s| s.fraction_high_gte.is_none()));
    assert!(r.meta.warnings.is_empty());
}

#[test]
fn sessions_are_isolated() {
    let sessions: Vec<_> = (5..7).map(|s| gen_coupled_session(&spec(s)).unwrap().0).collect();
    let cfg = quick();
    let both = run_sessions(&sessions, &cfg, Exec::Parallel);
    let reversed: Vec<_> = sessions.iter().rev().cloned().collect();
    let both_rev = run_sessions(&reversed, &cfg, Exec::Sequential);
    let alone = run_pipeline(&sessions[1], &cfg).unwrap();
    let j = |a: &drivepat::pipeline::Analysis| a.report.to_json().unwrap();
    assert_eq!(j(both[1].as_ref().unwrap()), j(&alone));
    assert_eq!(j(both_rev[0].as_ref().unwrap()), j(&alone));
    assert_ne!(j(both[0].as_ref().unwrap()), j(&alone));
}

#[test]
fn outputs_round_trip() {
    let (session, _) = gen_coupled_session(&spec(8)).unwrap();
    let a = run_pipeline(&session, &quick()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &a).unwrap();
    for f in [
        "report.json",
        "segments.json",
        "changeprob.csv",
        "entropy.csv",
        "transitions.csv",
        "cooccurrence_hr.csv",
        "cooccurrence_gte.csv",
        "pattern_summaries.csv",
        "tests.csv",
        "styles.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let back: drivepat::pipeline::Report = serde_json::from_str(&text).unwrap();
    assert_eq!(back.to_json().unwrap(), text);
    let header = std::fs::read_to_string(dir.path().join("pattern_summaries.csv")).unwrap();
    assert!(header.starts_with("group,pattern,label,channel,n,mean,sd,p25,median,p75"));
}

fn labels(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|i| format!("{prefix}{i}")).collect()
}

proptest! {
    #[test]
    fn relabeling_permutes_cooccurrence(
        behavior in prop::collection::vec(prop::option::of(0usize..3), 1..8),
        raw in prop::collection::vec((0usize..8, 0usize..2), 0..60),
        rot in 0usize..3,
    ) {
        let samples: Vec<(usize, usize)> = raw.into_iter().map(|(s, st)| (s % behavior.len(), st)).collect();
        let base = cooccurrence("hr", &behavior, &samples, &labels("b", 3), &labels("s", 2));
        let perm = |b: usize| (b + rot) % 3;
        let moved_behavior: Vec<Option<usize>> = behavior.iter().map(|b| b.map(perm)).collect();
        let moved_samples: Vec<(usize, usize)> = samples.iter().map(|&(s, st)| (s, 1 - st)).collect();
        let moved = cooccurrence("hr", &moved_behavior, &moved_samples, &labels("b", 3), &labels("s", 2));
        for b in 0..3 {
            for s in 0..2 {
                prop_assert_eq!(moved.counts[perm(b)][1 - s], base.counts[b][s]);
                prop_assert_eq!(moved.fractions[perm(b)][1 - s], base.fractions[b][s]);
            }
            let total: u64 = base.counts[b].iter().sum();
            let sum: f64 = base.fractions[b].iter().sum();
            if total > 0 {
                prop_assert!((sum - 1.0).abs() < 1e-9);
            } else {
                prop_assert_eq!(sum, 0.0);
            }
        }
    }

    #[test]
    fn segment_labels_are_majorities(raw in prop::collection::vec((0usize..5, 0usize..3), 0..80)) {
        let out = map_states_to_segments(&raw, 5, 3);
        for (seg, label) in out.iter().enumerate() {
            let counts: Vec<usize> = (0..3).map(|s| raw.iter().filter(|&&(g, st)| g == seg && st == s).count()).collect();
            match label {
                None => prop_assert!(counts.iter().all(|&c| c == 0)),
                Some(l) => {
                    prop_assert!(counts.iter().all(|&c| c <= counts[*l]));
                    prop_assert!(counts[..*l].iter().all(|&c| c < counts[*l]));
                }
            }
        }
    }
}
