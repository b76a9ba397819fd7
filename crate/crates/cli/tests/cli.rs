use ctw_core::io::series_from_csv;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn ctw(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctw"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn manifest(dir: &Path) -> toml::Value {
    toml::Value::Table(toml::from_str(&std::fs::read_to_string(dir.join("manifest.toml")).unwrap()).unwrap())
}

/// Writes `fig2.toml` with `edit` applied, into `dir`.
fn fig2_variant(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let p = dir.join("variant.toml");
    std::fs::write(&p, edit(std::fs::read_to_string(example("fig2.toml")).unwrap())).unwrap();
    p
}

fn small_ensemble(s: String) -> String {
    s.replace("n_traj = 400", "n_traj = 120")
}

#[test]
fn regimes_of_fig2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ctw(&["regimes", example("fig2.toml").to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let s = text(&o.stdout);
    assert!(s.contains("pseudo_adiabatic_ok=true"), "{s}");
    assert!(s.contains("monte_carlo_required=false"), "{s}");
    assert!(s.contains("bpp_ok=false"), "{s}");
}

#[test]
fn quiet_config_picks_bpp() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ctw(&["simulate", example("quiet.toml").to_str().unwrap(), "g2"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let m = manifest(tmp.path());
    assert_eq!(m["method"].as_str(), Some("bpp"));
    assert_eq!(m["regime"]["bpp_ok"].as_bool(), Some(true));
    let (g2, _) = series_from_csv(&std::fs::read_to_string(tmp.path().join("g2.csv")).unwrap()).unwrap();
    let zero = g2.delays.iter().position(|&t| t == 0.0).unwrap();
    assert!(g2.values[zero].re.abs() < 1e-9, "antibunching lost: {}", g2.values[zero].re);
}

#[test]
fn same_seed_same_bytes_and_digests_match() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fig2_variant(tmp.path(), small_ensemble);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = ctw(&["simulate", cfg.to_str().unwrap(), "g1", "--seed", "11"], d);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    }
    let m = manifest(&a);
    assert_eq!(m["master_seed"].as_integer(), Some(11));
    let outputs = m["outputs"].as_array().unwrap();
    assert!(outputs.len() >= 3);
    for entry in outputs {
        let file = entry["file"].as_str().unwrap();
        let bytes = std::fs::read(a.join(file)).unwrap();
        assert_eq!(bytes, std::fs::read(b.join(file)).unwrap(), "{file} differs between runs");
        assert_eq!(hex::encode(Sha256::digest(&bytes)), entry["sha256"].as_str().unwrap());
        assert_eq!(bytes.len() as i64, entry["bytes"].as_integer().unwrap());
    }
    let o = ctw(&["verify", a.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));

    std::fs::write(a.join("g1_rot.csv"), b"tampered").unwrap();
    let o = ctw(&["verify", a.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("g1_rot.csv"));
}

#[test]
fn different_seeds_differ() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fig2_variant(tmp.path(), small_ensemble);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ctw(&["simulate", cfg.to_str().unwrap(), "g2", "--seed", "1"], &a);
    ctw(&["simulate", cfg.to_str().unwrap(), "g2", "--seed", "2"], &b);
    assert_ne!(std::fs::read(a.join("g2.csv")).unwrap(), std::fs::read(b.join("g2.csv")).unwrap());
}

#[test]
fn monte_carlo_tracks_pseudo_adiabatic_g1() {
    let tmp = tempfile::tempdir().unwrap();
    let mc = fig2_variant(tmp.path(), small_ensemble);
    let o = ctw(&["simulate", mc.to_str().unwrap(), "g1"], &tmp.path().join("mc"));
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let pa = tmp.path().join("pa.toml");
    std::fs::write(
        &pa,
        std::fs::read_to_string(&mc).unwrap().replace("method = \"monte_carlo\"", "method = \"pseudo_adiabatic\""),
    )
    .unwrap();
    let o = ctw(&["simulate", pa.to_str().unwrap(), "g1"], &tmp.path().join("pa"));
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert_eq!(manifest(&tmp.path().join("pa"))["method"].as_str(), Some("pseudo_adiabatic"));

    let read = |d: &str| {
        series_from_csv(&std::fs::read_to_string(tmp.path().join(d).join("g1_rot.csv")).unwrap()).unwrap()
    };
    let ((m, err), (p, _)) = (read("mc"), read("pa"));
    let err = err.expect("Monte Carlo output carries a standard error column");
    assert_eq!(m.delays, p.delays);
    let rms = (m.values.iter().zip(&p.values).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / m.len() as f64).sqrt();
    // Residual drive memory over T2 lifts the Monte Carlo tail by a few percent.
    assert!(rms < 0.05, "rms {rms}");
    assert!(err.iter().all(|e| e.is_finite() && *e >= 0.0));
}

#[test]
fn hom_example_reports_ctw() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ctw(&["simulate", example("hom.toml").to_str().unwrap(), "hom"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let m = manifest(tmp.path());
    let c = m["results"]["ctw_ns"].as_float().unwrap();
    assert!(c > 0.0 && c < 10.0, "ctw {c}");
    for f in ["g2x_par.csv", "g2x_perp.csv", "visibility.csv"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn invalid_config_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fig2_variant(tmp.path(), |s| s.replace("t2_ns = 0.5", "t2_ns = \"half\""));
    let o = ctw(&["simulate", cfg.to_str().unwrap(), "g1"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("line"), "{}", text(&o.stderr));

    // T2 > 2 T1 is unphysical.
    let cfg = fig2_variant(tmp.path(), |s| s.replace("t2_ns = 0.5", "t2_ns = 0.9"));
    let o = ctw(&["simulate", cfg.to_str().unwrap(), "g1"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("t2"), "{}", text(&o.stderr));
}

#[test]
fn forced_method_outside_regime_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fig2_variant(tmp.path(), |s| s.replace("method = \"monte_carlo\"", "method = \"bpp\""));
    let o = ctw(&["simulate", cfg.to_str().unwrap(), "g1"], &tmp.path().join("r"));
    assert_eq!(o.status.code(), Some(3));
    assert!(text(&o.stderr).contains("pseudo_adiabatic_ok=true"));
    assert!(!tmp.path().join("r").join("manifest.toml").exists());

    let o = ctw(&["simulate", cfg.to_str().unwrap(), "g1", "--override-regime"], &tmp.path().join("r"));
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
}

#[test]
fn reproduce_fig6_and_fig7() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ctw(&["reproduce", "fig6"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let dir = tmp.path().join("fig6");
    for f in ["a_par_tl20.csv", "b_par_q1.csv", "c_visibility_q1.csv", "ctw.csv", "manifest.toml"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert_eq!(manifest(&dir)["preset_version"].as_integer(), Some(1));

    let o = ctw(&["reproduce", "fig7"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let table = std::fs::read_to_string(tmp.path().join("fig7").join("ctw_vs_t_l.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(table.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 12 * 4);
    // CTW grows with T_L at zero amplitude noise.
    let ctws: Vec<f64> =
        rows.iter().filter(|r| r[1].parse::<f64>().unwrap() == 0.0).map(|r| r[2].parse().unwrap()).collect();
    assert!(ctws.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{ctws:?}");
}

#[test]
fn usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(ctw(&["reproduce", "fig5"], tmp.path()).status.code(), Some(1));
    assert_eq!(ctw(&["simulate", "missing.toml", "g1"], tmp.path()).status.code(), Some(1));
    assert_eq!(ctw(&["bogus"], tmp.path()).status.code(), Some(1));
    assert_eq!(ctw(&["--help"], tmp.path()).status.code(), Some(0));
}
