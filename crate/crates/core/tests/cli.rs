use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_hessquot"))
        .arg("--config")
        .arg(&path)
        .arg("--output")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn check_identities_seed_7() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        "command = \"check-identities\"\nseed = 7\n[identities]\nsamples = 10000\n",
        &["--no-timestamp"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/identities.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("name,samples,max_violation,tolerance,pass")
    );
    let row = lines.next().unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(cols[0], "concavity_identity");
    assert_eq!(cols[1], "10000");
    assert!(cols[2].parse::<f64>().unwrap() <= 1e-10);
}

#[test]
fn manufactured_solve_reports_sup_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        "command = \"solve\"\n[grid]\nn = 64\n[manufactured]\nfamily = \"isotropic\"\na = 0.1\nb = 0.1\n",
        &["--threads", "2"],
    );
    let text = stdout(&o);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{text}\n{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let err: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("sup_error "))
        .expect("sup_error line")
        .trim()
        .parse()
        .unwrap();
    assert!(err <= 5e-3, "{err}");
    let trace = std::fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert!(trace.starts_with("# generated at unix time "));
    assert_eq!(
        trace.lines().nth(1),
        Some("t,newton_iters,residual_sup,adm_margin,lambda1_max,osc_u,grad_sup,integral_u")
    );
    assert!(dir.path().join("out/solution.txt").exists());
    assert!(dir.path().join("out/monitor.csv").exists());
}

#[test]
fn dt_min_above_dt_init_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        "command = \"solve\"\n[grid]\nn = 16\n[homotopy]\ndt_init = 0.1\ndt_min = 0.2\n",
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("homotopy.dt_min"));
}

#[test]
fn unknown_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        "command = \"solve\"\n[grid]\nn = 16\nsize = 3\n",
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("size"));
}

#[test]
fn nonconvergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        "command = \"solve\"\n[grid]\nn = 16\n[rhs]\npsi = \"0.3 cos(x)\"\n[homotopy]\nmax_newton = 1\ndt_min = 0.05\n",
        &[],
    );
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn verify_then_monitor_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let solve =
        "command = \"verify-estimates\"\n[grid]\nn = 32\n[rhs]\npsi = \"0.3 sin(x) sin(y)\"\n";
    let o = run(dir.path(), solve, &["--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let first = std::fs::read_to_string(dir.path().join("out/monitor.csv")).unwrap();
    assert!(first.starts_with("name,bound,observed,margin,pass,node_i,node_j\n"));
    assert!(first.contains("commutation,"));

    let monitor = format!(
        "command = \"monitor\"\n[grid]\nn = 32\n[rhs]\npsi = \"0.3 sin(x) sin(y)\"\n[monitor]\nsolution_file = \"{}\"\n",
        dir.path().join("out/solution.txt").display()
    );
    let o = run(dir.path(), &monitor, &["--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let second = std::fs::read_to_string(dir.path().join("out/monitor.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn fixed_rhs_solve() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        "command = \"solve-fixed-rhs\"\n[grid]\nn = 32\n[rhs]\nf = \"0.5 + 0.1 sin(x)\"\n",
        &[],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("c = "));
}
