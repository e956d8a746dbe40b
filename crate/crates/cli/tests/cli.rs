//! End-to-end checks of the command-line interface: exit-code contract,
//! deterministic output, and the JSON schema round trip.

use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn jetgamma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jetgamma"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run(args: &[&str]) -> (i32, String) {
    let out = jetgamma(args);
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
    )
}

#[test]
fn exit_codes_follow_the_contract() {
    let liouville = scenario("liouville.toml");
    let kdv = scenario("kdv.toml");

    let (code, _) = run(&[
        "check-involutive",
        liouville.to_str().unwrap(),
        "--ops",
        "box,boxbar",
        "--on-shell",
    ]);
    assert_eq!(code, 0, "compatible tuple exits 0");

    let (code, out) = run(&[
        "check-involutive",
        kdv.to_str().unwrap(),
        "--ops",
        "A1,A2",
        "--order",
        "3",
    ]);
    assert_eq!(code, 2, "negative verdict exits 2");
    assert!(out.contains("not strong compatible"));

    let (code, _) = run(&["check-involutive", kdv.to_str().unwrap(), "--ops", "A1"]);
    assert_eq!(code, 0, "a single involutive operator exits 0");

    let (code, _) = run(&["check-involutive", "/nonexistent.toml"]);
    assert_eq!(code, 1, "missing scenario is a usage error");

    let (code, _) = run(&[
        "check-involutive",
        kdv.to_str().unwrap(),
        "--ops",
        "nosuch",
    ]);
    assert_eq!(code, 1, "unknown operator name is a usage error");

    let (code, _) = run(&["frobnicate"]);
    assert_eq!(code, 1, "unknown subcommand is a usage error");
}

#[test]
fn output_is_byte_deterministic() {
    let liouville = scenario("liouville.toml");
    let args = [
        "extract-gamma",
        liouville.to_str().unwrap(),
        "--on-shell",
        "--json",
    ];
    let first = jetgamma(&args);
    let second = jetgamma(&args);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(first.status.code(), Some(0));
}

#[test]
fn json_family_round_trips_through_the_schema() {
    let liouville = scenario("liouville.toml");
    let (code, out) = run(&[
        "extract-gamma",
        liouville.to_str().unwrap(),
        "--on-shell",
        "--json",
    ]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&out).expect("valid JSON");
    assert_eq!(doc["verdict"]["status"], "compatible");
    assert_eq!(doc["verdict"]["order_bound"], 2);

    // Rebuild the family from the document and serialize it again.
    let scenario = jetgamma_cli::scenario::Scenario::parse(
        &std::fs::read_to_string(liouville).unwrap(),
    )
    .unwrap();
    let family = jetgamma_core::gamma::family_from_json(&scenario.ctx, &doc["family"]).unwrap();
    let again = jetgamma_core::gamma::family_to_json(&scenario.ctx, &family);
    assert_eq!(doc["family"], again);
}

#[test]
fn magri_json_lists_levels_and_certificate() {
    let kdv = scenario("kdv.toml");
    let (code, out) = run(&["magri", kdv.to_str().unwrap(), "--steps", "2", "--json"]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["levels"].as_array().unwrap().len(), 3);
    assert_eq!(doc["levels"][0]["density"], "u");
    assert_eq!(doc["levels"][1]["covector"], "u");
    assert!(doc["all_passed"].as_bool().unwrap());
    assert!(doc["certificate"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"].as_bool().unwrap()));
}

#[test]
fn magri_steps_zero_gives_the_casimir_only() {
    let kdv = scenario("kdv.toml");
    let (code, out) = run(&["magri", kdv.to_str().unwrap(), "--steps", "0"]);
    assert_eq!(code, 0);
    assert!(out.contains("H_0"));
    assert!(!out.contains("H_1"));
}

#[test]
fn magri_rejects_unsupported_first_structure() {
    // A scenario whose A1 is not D_x reports the documented limitation.
    let dir = std::env::temp_dir().join("jetgamma-test-unsupported");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad_magri.toml");
    std::fs::write(
        &path,
        r#"
[context]
independents = ["x"]
dependents = ["u"]
parameters = ["p", "q"]
parameter_parity = "odd"

[operators]
A1 = "2*D_x"
A2 = "u"

[defaults]
pair = ["A1", "A2"]
casimir = "u"
"#,
    )
    .unwrap();
    let out = jetgamma(&["magri", path.to_str().unwrap(), "--steps", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("image inversion"), "stderr: {err}");
}

#[test]
fn bracket_prints_the_induced_bracket() {
    let kdv = scenario("kdv.toml");
    let (code, out) = run(&["bracket", kdv.to_str().unwrap(), "--op", "A2"]);
    assert_eq!(code, 0);
    assert!(out.contains("D_x⊗1 - 1⊗D_x"));
}

#[test]
fn empty_tuple_is_a_usage_error() {
    let dir = std::env::temp_dir().join("jetgamma-test-empty");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("empty.toml");
    std::fs::write(
        &path,
        r#"
[context]
independents = ["x"]
dependents = ["u"]
parameters = ["p", "q"]
parameter_parity = "odd"
"#,
    )
    .unwrap();
    let out = jetgamma(&["extract-gamma", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
