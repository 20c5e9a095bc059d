use std::fs;
use std::process::Command;

fn capcal(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_capcal")).args(args).output().unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let cfg_arg = cfg.to_str().unwrap();

    fs::write(dir.path().join("survey.csv"), "facility,neighborhood,visits,problems\nYC,A,100,10\nYC,B,100,30\n").unwrap();
    fs::write(&cfg, "[inputs]\nsurvey = \"survey.csv\"\n").unwrap();
    let out = capcal(&["chisq", "--config", cfg_arg]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.trim_end().ends_with("chisq.csv"), "{stdout}");

    fs::write(dir.path().join("survey.csv"), "facility,neighborhood,visits,problems\nYC,A,1,10\n").unwrap();
    let out = capcal(&["chisq", "--config", cfg_arg]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("problems exceed visits"), "{stderr}");

    fs::write(&cfg, "[inputs]\nsurvey = \"survey.csv\"\noccupancy = \"occ.csv\"\n").unwrap();
    assert_eq!(capcal(&["calibrate", "--config", cfg_arg]).status.code(), Some(2));

    fs::write(&cfg, "[unknown]\n").unwrap();
    assert_eq!(capcal(&["calibrate", "--config", cfg_arg]).status.code(), Some(2));
    assert_eq!(capcal(&["calibrate"]).status.code(), Some(2));
}

#[test]
fn analysis_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(dir.path().join("survey.csv"), "facility,neighborhood,visits,problems\nP,A,10,0\n").unwrap();
    fs::write(dir.path().join("addresses.csv"), "neighborhood,lat,lon,developed\nA,35.7,-84.2,true\n").unwrap();
    fs::write(dir.path().join("facilities.csv"), "facility,lat,lon\nP,35.6,-84.2\n").unwrap();
    fs::write(&cfg, "[inputs]\nsurvey = \"survey.csv\"\naddresses = \"addresses.csv\"\nfacilities = \"facilities.csv\"\n").unwrap();
    let out = capcal(&["spatial", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("o/decay_fits.csv").exists());
}
