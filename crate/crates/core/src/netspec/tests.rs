use std::path::PathBuf;

use super::*;

fn examples_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples")
}

fn example(name: &str) -> String {
    std::fs::read_to_string(examples_dir().join(name)).unwrap()
}

const MINIMAL: &str = r#"{
  "schema_version": 1,
  "grid": { "omega_min": 1.0, "omega_max": 2.0, "bins": 2 },
  "modes": [{ "name": "a" }],
  "spectra": { "f": { "kind": "samples", "values": [1.0, [0.0, 1.0]] } },
  "source": { "kind": "single_photon", "mode": "a", "spectrum": "f" },
  "detectors": [{ "name": "D", "modes": ["a"], "eta_det": 0.5 }]
}"#;

#[test]
fn minimal_file_parses() {
    let exp = parse(MINIMAL).unwrap();
    assert_eq!(exp.spec().modes.len(), 1);
    assert_eq!(exp.spec().outputs, vec![OutputKind::OutcomeTable]);
    let r = exp.run_with_threads(Some(1)).unwrap();
    let t = r.points[0].outcome_table.as_ref().unwrap();
    assert!((t[0] - 0.5).abs() < 1e-12 && (t[1] - 0.5).abs() < 1e-12);
}

#[test]
fn undeclared_mode_is_named() {
    let text = MINIMAL.replace(r#""modes": ["a"]"#, r#""modes": ["ghost"]"#);
    let err = parse(&text).unwrap_err();
    assert!(err.to_string().contains("ghost"), "{err}");
    assert!(!err.is_numerical());
}

#[test]
fn unknown_field_reports_path() {
    let text = MINIMAL.replace(r#""eta_det": 0.5"#, r#""eta_det": 0.5, "gain": 2"#);
    match parse(&text).unwrap_err() {
        Error::Schema { path, message } => {
            assert!(path.starts_with("detectors[0]"), "{path}");
            assert!(message.contains("gain"), "{message}");
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn wrong_version_rejected() {
    let text = MINIMAL.replace(r#""schema_version": 1"#, r#""schema_version": 2"#);
    assert!(matches!(parse(&text), Err(Error::Schema { .. })));
}

#[test]
fn non_unitary_matrix_reports_residual() {
    let text = MINIMAL
        .replace(r#""modes": [{ "name": "a" }]"#, r#""modes": [{ "name": "a" }, { "name": "b" }]"#)
        .replace(
            r#""detectors""#,
            r#""channels": [{ "kind": "custom_unitary", "inputs": ["a"], "outputs": ["b"], "matrix": { "flat": [[0.9]] } }],
  "detectors""#,
        );
    let err = parse(&text).unwrap_err();
    assert!(matches!(err, Error::NotUnitary { .. }), "{err}");
}

#[test]
fn unknown_sweep_parameter_rejected() {
    let exp = parse(MINIMAL).unwrap();
    let err = exp.override_parameter("detector.D.gain", vec![1.0]).unwrap_err();
    assert!(err.to_string().contains("detector.D.gain"));
}

#[test]
fn round_trip_is_identity() {
    for name in ["single_photon_apd.json", "coherent_sweep.json", "beam_splitter_tap.json", "qkd_singlet_sweep.json"] {
        let exp = parse(&example(name)).unwrap();
        let again = parse(&exp.to_json()).unwrap();
        assert_eq!(exp, again, "{name}");
    }
    let exp = parse(MINIMAL).unwrap();
    assert_eq!(parse(&exp.to_json()).unwrap(), exp);
}

#[test]
fn single_photon_eta_sweep() {
    let r = parse(&example("single_photon_apd.json")).unwrap().run_with_threads(Some(2)).unwrap();
    let clicks: Vec<f64> = r.points.iter().map(|p| p.outcome_table.as_ref().unwrap()[1]).collect();
    for (got, want) in clicks.iter().zip([0.0, 0.5, 1.0]) {
        assert!((got - want).abs() < 1e-12, "{clicks:?}");
    }
}

#[test]
fn coherent_sweep_matches_poisson_closed_form() {
    let exp = parse(&example("coherent_sweep.json")).unwrap();
    let r = exp.run_with_threads(None).unwrap();
    let (eta, p_dark) = (0.6, 0.001);
    for p in &r.points {
        let mean = p.values[0];
        let want = 1.0 - (1.0 - p_dark) * (-eta * mean).exp();
        let got = p.outcome_table.as_ref().unwrap()[1];
        // truncation removes at most the default 1e-12 tail mass
        assert!((got - want).abs() < 1e-10, "mean {mean}: {got} vs {want}");
        let photons = p.mean_photons.as_ref().unwrap()[0];
        assert!((photons - mean).abs() < 1e-9 * mean.max(1.0), "{photons} vs {mean}");
    }
}

#[test]
fn beam_splitter_pipeline() {
    let r = parse(&example("beam_splitter_tap.json")).unwrap().run_with_threads(None).unwrap();
    for p in &r.points {
        let eta_t = p.values[0];
        let no_click = p.outcome_table.as_ref().unwrap()[0];
        assert!((no_click - (1.0 - eta_t * 0.8f64).powi(3)).abs() < 1e-10);
        assert!((p.mean_photons.as_ref().unwrap()[0] - 3.0 * eta_t).abs() < 1e-10);
    }
}

#[test]
fn qkd_sweep_tables_are_distributions() {
    let exp = parse(&example("qkd_singlet_sweep.json")).unwrap();
    let r = exp.run_with_threads(None).unwrap();
    assert_eq!(r.points.len(), 6);
    for p in &r.points {
        let t = p.outcome_table.as_ref().unwrap();
        let total: f64 = t.iter().sum();
        // the truncated Poisson mixture misses at most cutoff_epsilon
        assert!((total - 1.0).abs() < 1e-9, "{total}");
        assert!(t.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}

#[test]
fn csv_is_deterministic_across_thread_counts() {
    let exp = parse(&example("qkd_singlet_sweep.json")).unwrap();
    let a = exp.run_with_threads(Some(1)).unwrap().to_csv();
    let b = exp.run_with_threads(Some(4)).unwrap().to_csv();
    let c = exp.run_with_threads(Some(4)).unwrap().to_csv();
    assert_eq!(a, b);
    assert_eq!(b, c);
    let header = a.lines().next().unwrap();
    assert_eq!(header, "point,source.poisson_mean,detector.B1.eta_det,quantity,label,value");
    assert!(a.contains(",outcome,A1=1;A2=0;B1=0;B2=1,"));
}

#[test]
fn sweep_points_first_axis_slowest() {
    let exp = parse(&example("qkd_singlet_sweep.json")).unwrap();
    let (names, points) = exp.points();
    assert_eq!(names.len(), 2);
    assert_eq!(points[0], vec![0.01, 0.3]);
    assert_eq!(points[1], vec![0.01, 0.6]);
    assert_eq!(points[2], vec![0.1, 0.3]);
}

#[test]
fn override_replaces_axis() {
    let exp = parse(&example("single_photon_apd.json")).unwrap();
    let exp = exp.override_parameter("detector.D.eta_det", vec![0.25]).unwrap();
    let r = exp.run_with_threads(Some(1)).unwrap();
    assert_eq!(r.points.len(), 1);
    assert!((r.points[0].outcome_table.as_ref().unwrap()[1] - 0.25).abs() < 1e-12);
}

/// Set `PHOTONNET_UPDATE_GOLDEN=1` to rewrite the snapshot after an
/// intentional schema change.
#[test]
fn qkd_example_matches_golden_snapshot() {
    let exp = parse(&example("qkd_singlet_sweep.json")).unwrap();
    let golden = examples_dir().join("qkd_singlet_sweep.golden.json");
    let got = format!("{}\n", exp.to_json());
    if std::env::var_os("PHOTONNET_UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &got).unwrap();
    }
    assert_eq!(got, std::fs::read_to_string(golden).unwrap());
}

#[test]
fn schema_mentions_every_source_kind() {
    let s = json_schema();
    for kind in ["single_photon", "n_photon", "coherent", "bi_photon", "qkd_singlet"] {
        assert!(s.contains(kind), "{kind}");
    }
}

#[test]
fn overlapping_mode_cannot_enter_channel() {
    let text = MINIMAL
        .replace(r#""modes": [{ "name": "a" }]"#, r#""modes": [{ "name": "a" }, { "name": "b" }, { "name": "c" }]"#)
        .replace(
            r#""detectors""#,
            r#""overlaps": [{ "modes": ["a", "c"], "kappa": 0.5 }],
  "channels": [{ "kind": "custom_unitary", "inputs": ["a"], "outputs": ["b"], "matrix": { "flat": [[1.0]] } }],
  "detectors""#,
        );
    let err = parse(&text).unwrap_err();
    assert!(err.to_string().contains("overlap"), "{err}");
}
