use std::path::Path;
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

const STABLE: &str = r#"
schema_version = 1
seed = 7

[measure]
kind = "stable"
dim = 1
sigma = 0.5

[scaling]
kind = "stable"
sigma = 0.5
alpha1 = 0.6
alpha2 = 0.45

[grid]
n = 256
period = 8.0
"#;

struct Run {
    code: i32,
    out: TempDir,
    stderr: String,
}

impl Run {
    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&self.text(name)).unwrap()
    }

    fn text(&self, name: &str) -> String {
        std::fs::read_to_string(self.out.path().join(name)).unwrap()
    }
}

fn run(cmd: &str, config: &str, extra: &[&str]) -> Run {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_levy-lp"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out.path())
        .args(extra)
        .output()
        .unwrap();
    Run {
        code: o.status.code().unwrap(),
        out,
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

fn rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn digest_of(path: &Path) -> String {
    levy_lp::report::hex_digest(&std::fs::read(path).unwrap())
}

#[test]
fn symbol_csv_starts_at_zero_frequency() {
    let r = run("symbol", STABLE, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = r.text("symbol.csv");
    assert!(text.starts_with("xi0,re_psi,im_psi\n"));
    let data = rows(&text);
    assert_eq!(data.len(), 256);
    assert_eq!(data[0], vec![0.0, 0.0, 0.0]);
    // 17 significant digits.
    let cell = text.lines().nth(2).unwrap().split(',').next().unwrap();
    assert_eq!(
        cell.split('e')
            .next()
            .unwrap()
            .replace(['.', '-'], "")
            .len(),
        17
    );
}

#[test]
fn symbol_bounds_without_scaling_is_validation_error() {
    let cfg = r#"
schema_version = 1
[measure]
kind = "stable"
dim = 1
sigma = 0.5
[symbol]
bounds = true
"#;
    let r = run("symbol", cfg, &[]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn subordinated_symbol_slope_between_scaling_indices() {
    let cfg = r#"
schema_version = 1
[measure]
kind = "subordinated"
dim = 1
bernstein = { family = "shifted_power", alpha = 0.5, beta = 0.5 }
[grid]
n = 512
period = 64.0
"#;
    let r = run("symbol", cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (x, y): (Vec<f64>, Vec<f64>) = rows(&r.text("symbol.csv"))
        .into_iter()
        .filter(|row| row[0] > 0.0)
        .map(|row| (row[0], -row[1]))
        .unzip();
    let slope = levy_lp::report::loglog_slope(&x, &y);
    // φ(r) = (r + r^½)^½ has δ₁ = 1/4 and δ₂ = 1/2.
    assert!((0.5..=1.0).contains(&slope), "{slope}");
}

#[test]
fn elliptic_constant_forcing() {
    let cfg = format!(
        "{STABLE}\n[problem]\nkind = \"elliptic\"\nlambda = 2.0\nforcing = {{ kind = \"constant\", value = 1.0 }}\n"
    );
    let r = run("solve", &cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for row in rows(&r.text("solution.csv")) {
        assert!(
            (row[1] - 0.5).abs() < 1e-14 && row[2].abs() < 1e-14,
            "{row:?}"
        );
    }
    let j = r.json("solve.json");
    assert_eq!(j["residual"]["pass"], Value::Bool(true));
}

#[test]
fn elliptic_without_damping_is_validation_error() {
    let cfg = format!(
        "{STABLE}\n[problem]\nkind = \"elliptic\"\nlambda = 0.0\nforcing = {{ kind = \"constant\", value = 1.0 }}\n"
    );
    assert_eq!(run("solve", &cfg, &[]).code, 2);
}

#[test]
fn parabolic_with_monte_carlo_cross_check() {
    let cfg = r#"
schema_version = 1
seed = 11
[measure]
kind = "atomic"
dim = 1
atoms = [[[0.5], 1.0], [[-0.25], 2.0]]
[grid]
n = 32
period = 4.0
time_steps = 4
[problem]
kind = "parabolic"
lambda = 0.5
forcing = { kind = "bank", index = 1, seed = 4 }
mc = { n_paths = 20000, probes = 10 }
"#;
    let r = run("solve", cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let j = r.json("solve.json");
    assert_eq!(j["mc_agreement"]["pass"], Value::Bool(true));
    assert_eq!(j["mc_agreement"]["lhs"].as_array().unwrap().len(), 10);
    assert!(j["mc_agreement"]["diagnostics"]["z_scores"].is_array());
}

#[test]
fn verify_full_suite_on_stable_pair() {
    let cfg = format!(
        "{STABLE}\n[verify]\nitems = [\"explicit_constants\", \"symbol_bounds\", \"energy_identity\", \"assumption_d\"]\n"
    );
    let r = run("verify", &cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let j = r.json("verify.json");
    assert_eq!(j["pass"], Value::Bool(true));
    let ec = &j["reports"]["explicit_constants"];
    assert_eq!(ec["bank_size"], Value::from(50));
    assert!(ec["worst_ratio"].as_f64().unwrap() <= 1.0 + 1e-6);
    // Emission order is by item name.
    let keys: Vec<&String> = j["reports"].as_object().unwrap().keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn verify_empty_selector_is_validation_error() {
    let cfg = format!("{STABLE}\n[verify]\nitems = []\n");
    assert_eq!(run("verify", &cfg, &[]).code, 2);
}

#[test]
fn verify_kappa_mismatch_fails_symbol_bounds() {
    let cfg = STABLE.replace(
        "kind = \"stable\"\nsigma = 0.5\nalpha1",
        "kind = \"explicit\"\nkappa = { kind = \"power\", coef = 1.0, exponent = 1.0 }\nl = { kind = \"power\", coef = 1.0, exponent = 1.0 }\nalpha1",
    ) + "\n[verify]\nitems = [\"symbol_bounds\"]\n";
    let r = run("verify", &cfg, &[]);
    assert_eq!(r.code, 1, "{}", r.stderr);
    let j = r.json("verify.json");
    assert_eq!(j["failed"], serde_json::json!(["symbol_bounds"]));
    // Reports are still listed in the manifest.
    let m = r.json("manifest.json");
    assert_eq!(m["files"][0]["path"], Value::from("verify.json"));
}

#[test]
fn config_errors_exit_two() {
    let typo = STABLE.replace("sigma = 0.5\n\n[scaling]", "sigmaa = 0.5\n\n[scaling]");
    assert_eq!(run("symbol", &typo, &[]).code, 2);
    let extra = format!("{STABLE}\nunknown = 1\n");
    assert_eq!(run("symbol", &extra, &[]).code, 2);
    let version = STABLE.replace("schema_version = 1", "schema_version = 2");
    assert_eq!(run("symbol", &version, &[]).code, 2);
}

#[test]
fn monte_carlo_needs_a_seed() {
    let cfg = STABLE.replace("seed = 7\n", "") + "\n[simulate]\nhorizon = 1.0\nn_paths = 1000\n";
    assert_eq!(run("simulate", &cfg, &[]).code, 2);
    let r = run("simulate", &cfg, &["--seed", "5"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json("sample.json")["seed"], Value::from(5));
}

#[test]
fn same_seed_gives_identical_reports() {
    let cfg = format!("{STABLE}\n[simulate]\nhorizon = 0.5\nn_paths = 2000\n");
    let a = run("simulate", &cfg, &["--threads", "2"]);
    let b = run("simulate", &cfg, &[]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(a.text("sample.json"), b.text("sample.json"));
    assert_eq!(a.text("terminal.csv"), b.text("terminal.csv"));
    let c = run("simulate", &cfg, &["--seed", "8"]);
    assert_ne!(a.text("sample.json"), c.text("sample.json"));
}

#[test]
fn manifest_digests_match_files() {
    let cfg = format!("{STABLE}\n[density]\ntimes = [0.5, 2.0]\nmin_period = 8.0\n");
    let r = run("density", &cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let m = r.json("manifest.json");
    let files = m["files"].as_array().unwrap();
    assert_eq!(files.len(), 3);
    for f in files {
        let path = r.out.path().join(f["path"].as_str().unwrap());
        assert_eq!(f["sha256"].as_str().unwrap(), digest_of(&path));
    }
    let d = r.json("density.json");
    assert_eq!(d["times"], serde_json::json!([0.5, 2.0]));
    assert!((d["gamma"][1].as_f64().unwrap() - 4.0).abs() < 1e-9);
}

#[test]
fn cz_spike_decomposition() {
    let cfg = r#"
schema_version = 1
[measure]
kind = "stable"
dim = 1
sigma = 1.0
[scaling]
kind = "stable"
sigma = 1.0
alpha1 = 1.0
alpha2 = 1.0
[cz]
input = { kind = "spike", mass = 1.0 }
alpha = 4.0
"#;
    let r = run("cz", cfg, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let j = r.json("cz.json");
    assert_eq!(j["decomposition"]["pass"], Value::Bool(true));
    assert_eq!(j["weak11"]["pass"], Value::Bool(true));
    assert!(!j["bad_parts"].as_array().unwrap().is_empty());
    // f = g + b cell by cell.
    let f = rows(&r.text("cz_f.csv"));
    let g = rows(&r.text("cz_g.csv"));
    let b = rows(&r.text("cz_b.csv"));
    for ((f, g), b) in f.iter().zip(&g).zip(&b) {
        assert!((f[2] - g[2] - b[2]).abs() <= 1e-12 * f[2].abs().max(1.0));
    }
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let r = run("symbol", &std::fs::read_to_string(&path).unwrap(), &[]);
            assert_eq!(r.code, 0, "{}: {}", path.display(), r.stderr);
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
