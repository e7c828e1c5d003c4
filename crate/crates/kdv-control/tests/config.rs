use kdv_control::config::{parse, parse_values};
use kdv_control::scenario::{validate, ScenarioMode};
use kdv_control::KdvError;

#[test]
fn sections_prefix_keys() {
    let c = parse("mode = simulate # trailing\n\n[mesh]\nL = 2\nn = \"64\"\n[u0]\nprofile = sin\n").unwrap();
    assert_eq!(c.get("mesh.L"), Some("2"));
    assert_eq!(c.get("mesh.n"), Some("64"));
    assert_eq!(c.get("u0.profile"), Some("sin"));
    assert_eq!(c.entries["mesh.L"].line, 4);
    assert_eq!(c.echo(), "mesh.L = 2\nmesh.n = 64\nmode = simulate\nu0.profile = sin\n");
}

#[test]
fn quoted_hash_is_not_a_comment() {
    let c = parse("name = \"a # b\"\n").unwrap();
    assert_eq!(c.get("name"), Some("a # b"));
}

#[test]
fn syntax_errors_carry_lines() {
    let line = |text: &str| match parse(text) {
        Err(KdvError::Config { line, .. }) => line,
        other => panic!("{other:?}"),
    };
    assert_eq!(line("a = 1\nbroken\n"), 2);
    assert_eq!(line("a = 1\n[sec\n"), 2);
    assert_eq!(line("a = 1\n\na = 2\n"), 3);
    assert_eq!(line("bad key = 1\n"), 1);
}

#[test]
fn unknown_key_reported_by_line() {
    let c = parse("mode = simulate\n[mesh]\nL = 1\nT = 1\nn = 32\nm = 32\nwidth = 3\n[u0]\nprofile = sin\n").unwrap();
    match validate(&c) {
        Err(KdvError::Config { line, msg }) => {
            assert_eq!(line, 7);
            assert!(msg.contains("mesh.width"), "{msg}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_keys_listed_together() {
    let c = parse("mode = regional\n").unwrap();
    match validate(&c) {
        Err(KdvError::MissingKeys(keys)) => {
            for k in ["mesh.L", "mesh.T", "mesh.n", "mesh.m", "regional.l1", "regional.l2", "regional.l1p"] {
                assert!(keys.iter().any(|x| x == k), "{k} not in {keys:?}");
            }
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_mode_and_types() {
    let c = parse("mode = wave\n[mesh]\nL = 1\nT = 1\nn = 32\nm = 32\n").unwrap();
    assert!(validate(&c).is_err());
    let c = parse("mode = simulate\n[mesh]\nL = 1\nT = 1\nn = many\nm = 32\n[u0]\nprofile = sin\n").unwrap();
    match validate(&c) {
        Err(KdvError::Config { line, .. }) => assert_eq!(line, 5),
        other => panic!("{other:?}"),
    }
    let c = parse("mode = hardy-suite\n[mesh]\nL = 1\nT = 1\nn = 32\nm = 32\n").unwrap();
    assert_eq!(validate(&c).unwrap(), ScenarioMode::HardySuite);
}

#[test]
fn override_type_error_has_no_line() {
    let mut c = parse("mode = simulate\n[mesh]\nL = 1\nT = 1\nn = 32\nm = 32\n[u0]\nprofile = sin\n").unwrap();
    c.set("mesh.n", "x");
    assert!(matches!(validate(&c), Err(KdvError::Invalid(_))));
}

#[test]
fn scan_values() {
    assert_eq!(parse_values("").unwrap(), Vec::<String>::new());
    assert_eq!(parse_values("1, 2,3").unwrap(), ["1", "2", "3"]);
    assert_eq!(parse_values("5.8:6.0:0.1").unwrap(), ["5.8", "5.9", "6"]);
    assert_eq!(parse_values("-1:1:1").unwrap(), ["-1", "0", "1"]);
    assert!(parse_values("1:0:1").is_err());
    assert!(parse_values("0:1:0").is_err());
    assert!(parse_values("1:2").is_err());
}

#[test]
fn mode_names_round_trip() {
    for name in [
        "simulate",
        "null-control",
        "null-to-trajectory",
        "exact-weighted",
        "regional",
        "carleman-check",
        "observability-scan",
        "hardy-suite",
        "critical-scan",
    ] {
        assert_eq!(ScenarioMode::parse(name).unwrap().name(), name);
    }
}

proptest::proptest! {
    #[test]
    fn comma_lists_round_trip(v in proptest::collection::vec(-1000i64..1000, 1..12)) {
        let spec = v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ,");
        let got: Vec<i64> = parse_values(&spec).unwrap().iter().map(|s| s.parse().unwrap()).collect();
        proptest::prop_assert_eq!(got, v);
    }

    #[test]
    fn echo_reparses_to_same_entries(vals in proptest::collection::vec("[a-z0-9.]{1,8}", 1..6)) {
        let text: String = vals.iter().enumerate().map(|(i, v)| format!("k{i} = {v}\n")).collect();
        let a = parse(&text).unwrap();
        let b = parse(&a.echo()).unwrap();
        proptest::prop_assert_eq!(a.echo(), b.echo());
    }
}
