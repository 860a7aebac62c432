use std::path::Path;
use std::process::{Command, Output};

fn amoments(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amoments"))
        .args(args)
        .env_remove("AMOMENTS_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn class_group_of_small_discriminants() {
    let o = amoments(&["classgroup", "--d", "-23"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "delta,narrow,h,invariants\n-23,false,3,3\n");
    let o = amoments(&["classgroup", "--d", "-56"]);
    assert!(stdout(&o).ends_with("-56,false,4,4\n"));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["moment", "class"][..],
        &["identity", "first-moment", "--x", "10", "--weight", "sigma"],
        &["unlinked", "--setting", "class", "--k", "9"],
        &["classgroup", "--d", "-12"],
        &["verify", "selmer", "--curve", "0,1"],
        &["bogus"],
    ] {
        assert_eq!(amoments(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn unwritable_output_exits_3() {
    let o = amoments(&[
        "unlinked",
        "--setting",
        "class",
        "--k",
        "1",
        "--out",
        "/nonexistent/dir/out.csv",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn checks_report_pass() {
    let o = amoments(&["identity", "first-moment", "--x", "60", "--weight", "tau"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "check,X,result\nfirst_moment,60,EQUAL\n");
    let o = amoments(&["unlinked", "--setting", "selmer", "--k", "2"]);
    assert_eq!(stdout(&o), "check,setting,k,size\nmax_unlinked,selmer,2,16\n");
    let o = amoments(&["verify", "selmer", "--check", "descent", "--bound", "100"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn charsum_independent_of_threads() {
    let base = ["charsum", "--x", "50000", "--z", "10,100", "--chunk-size", "500"];
    let runs: Vec<String> = ["1", "2", "8"]
        .iter()
        .map(|t| {
            let mut args = base.to_vec();
            args.extend(["--threads", t]);
            let o = amoments(&args);
            assert!(o.status.success());
            stdout(&o)
        })
        .collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
    assert!(runs[0].starts_with("X,z,scheme,sum,normalized\n"));
}

#[test]
fn checkpoint_from_another_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("h3.cp");
    let cp = cp.to_str().unwrap();
    let first = ["density", "--quantity", "h3", "--x", "20000", "--checkpoint", cp];
    assert!(amoments(&first).status.success());
    assert!(Path::new(cp).exists());
    // Resuming a finished run reproduces its output without recomputation.
    assert_eq!(stdout(&amoments(&first)), stdout(&amoments(&first[..5])));
    let other = ["density", "--quantity", "h3", "--x", "30000", "--checkpoint", cp];
    assert_eq!(amoments(&other).status.code(), Some(2));
}

#[test]
fn halted_weighted_moment_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("w.cp");
    let args = [
        "moment",
        "class",
        "--experiment",
        "weighted",
        "--x",
        "2000,8000",
        "--k",
        "2",
        "--chunk-size",
        "250",
        "--checkpoint",
        cp.to_str().unwrap(),
    ];
    let reference = amoments(&args[..10]);
    assert!(reference.status.success());
    let mut halted = args.to_vec();
    halted.extend(["--halt-after", "5"]);
    assert!(!amoments(&halted).status.success());
    let resumed = amoments(&args);
    assert!(resumed.status.success());
    assert_eq!(stdout(&resumed), stdout(&reference));
}
