use socialopt::oracles::{example1_ne, fixture_path, generate_fixtures, FixtureFile};

fn committed() -> FixtureFile {
    let text = std::fs::read_to_string(fixture_path()).expect("fixture file is checked in");
    serde_json::from_str(&text).unwrap()
}

#[test]
fn committed_fixtures_match_regeneration() {
    let old = committed();
    let new = generate_fixtures().unwrap();
    assert_eq!(old.entries.keys().collect::<Vec<_>>(), new.entries.keys().collect::<Vec<_>>());
    for (key, entry) in &old.entries {
        let fresh = &new.entries[key];
        assert_eq!(entry.input, fresh.input, "{key}");
        assert_eq!(entry.value, fresh.value, "{key}");
    }
}

#[test]
fn lookup_by_oracle_and_input() {
    let file = committed();
    let got = file.get("example1_ne", &serde_json::json!({ "theta": 0.3 })).expect("entry present");
    let want = serde_json::to_value(example1_ne(0.3)).unwrap();
    assert_eq!(got, &want);
    assert!(file.get("example1_ne", &serde_json::json!({ "theta": 0.35 })).is_none());
}
