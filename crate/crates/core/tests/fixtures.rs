use sha2::{Digest, Sha256};
use socid::validation::load_fixtures;

/// Guards the embedded reference tables against accidental edits.
#[test]
fn fixture_tables_are_pinned() {
    let expected = [
        ("table_I", "f16f6d08f3a4382ac1e7fe1f310716de957a4134bae8f96451e0ddb6124cf7b7"),
        ("table_V", "5ad3d799061568769db15ba8e0fb8d9b2dd120e408f61bdcbcc0cc1ffa9149b6"),
        ("table_VI", "cfd83ab01f8335e6700e8c8f91f520c75c0107009f0d9b76eaf4dab19952a08f"),
    ];
    let fixtures = load_fixtures();
    assert_eq!(fixtures.len(), expected.len());
    for (f, (label, digest)) in fixtures.iter().zip(expected) {
        assert_eq!(f.label, label);
        assert_eq!(format!("{:x}", Sha256::digest(f.to_csv().as_bytes())), digest, "{label}");
    }
}

#[test]
fn fixture_shapes() {
    let rows: Vec<(&str, f64, usize)> = load_fixtures().iter().map(|f| (f.label, f.pwm_pct, f.rows.len())).collect();
    assert_eq!(rows, [("table_I", 40.0, 10), ("table_V", 90.0, 16), ("table_VI", 40.0, 16)]);
}
