use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tttk_cli::commands;
use tttk_cli::RunConfig;
use tttk_core::datagen::Dataset;
use tttk_core::eikonal::{sweep_solve, SlownessField};
use tttk_core::tensorfile::Tensor;
use tttk_core::Constant;
use tttk_nn::train::{evaluate_psnr, predict, Samples};
use tttk_nn::{Checkpoint, Net, Psnr};

const SMALL: &str = r#"
[grid]
cartesian = 33
n_theta = 16
n_rho = 8
n_sources = 16

[dataset]
n_samples = 8
seed = 1

[net]
c = 4
c2 = 4
n_cnn = 2
n_cnn2 = 2

[train]
schedule = "custom"
stages = [{ batch = 2, lr = 0.001, epochs = 2 }]
seed = 3
"#;

fn tttk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tttk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tttk(args);
    assert!(
        out.status.success(),
        "tttk {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Setup {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Setup {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("run.toml");
        fs::write(&config, format!("{SMALL}\n{extra}")).unwrap();
        Self { dir, config }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn cfg(&self) -> RunConfig {
        RunConfig::load(&self.config).unwrap()
    }

    fn run(&self, args: &[&str]) -> String {
        let mut all = vec!["--config", s(&self.config)];
        all.extend_from_slice(args);
        ok(&all)
    }

    fn run_raw(&self, args: &[&str]) -> Output {
        let mut all = vec!["--config", s(&self.config)];
        all.extend_from_slice(args);
        tttk(&all)
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn gen_data_is_byte_identical_across_runs_and_thread_counts() {
    let t = Setup::new("");
    let a = t.path("a");
    let b = t.path("b");
    t.run(&["--threads", "1", "gen-data", "--out", s(&a)]);
    t.run(&["--threads", "3", "gen-data", "--out", s(&b)]);
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    assert_eq!(fa.len(), 4);
    assert_eq!(fa, fb);
}

#[test]
fn manifest_records_amplitudes() {
    for (kind, want) in [("negative", vec![-0.5]), ("positive", vec![2.0])] {
        let t = Setup::new("");
        let text = fs::read_to_string(&t.config).unwrap().replace(
            "[dataset]\n",
            &format!("[dataset]\nkind = \"{kind}\"\n"),
        );
        fs::write(&t.config, text).unwrap();
        let out = t.path("ds");
        t.run(&["gen-data", "--out", s(&out)]);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        let amps: Vec<f64> = serde_json::from_value(manifest["amplitudes"].clone()).unwrap();
        assert_eq!(amps, want, "{kind}");
    }
}

#[test]
fn solve_matches_library_bitwise() {
    let t = Setup::new("");
    let out = t.path("u.tttk");
    t.run(&["solve", "--angle", "0.3", "--out", s(&out)]);
    assert!(out.with_extension("png").exists());
    let stored = Tensor::<f64>::load(&out).unwrap();
    let cfg = t.cfg();
    let m = SlownessField::rasterize(cfg.cartesian().unwrap(), &Constant(1.0), 0.0, cfg.solver.outside_slowness).unwrap();
    let u = sweep_solve(&m, 0.3, &cfg.sweep()).unwrap();
    assert_eq!(stored.dims, [33, 33]);
    let same = stored.data.iter().zip(&u.field.values).all(|(a, b)| a.to_bits() == b.to_bits());
    assert!(same);

    // a stored slowness goes through the same path
    let slow = t.path("m.tttk");
    Tensor::new(vec![33, 33], m.field.values.clone()).unwrap().save(&slow).unwrap();
    let out2 = t.path("u2.tttk");
    t.run(&["solve", "--slowness", s(&slow), "--angle", "0.3", "--out", s(&out2)]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&out2).unwrap());
}

#[test]
fn corrupt_slowness_names_the_file() {
    let t = Setup::new("");
    let bad = t.path("broken-slowness.tttk");
    fs::write(&bad, b"TTTK\x01\x00\x00\x00garbage").unwrap();
    let out = t.run_raw(&["solve", "--slowness", s(&bad), "--out", s(&t.path("u.tttk"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("broken-slowness.tttk"), "{err}");
}

#[test]
fn solver_failure_exits_with_numerical_code() {
    let t = Setup::new("[solver]\nmax_sweeps = 4\ntol = 1e-14\n");
    let out = t.run_raw(&["solve", "--out", s(&t.path("u.tttk"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn dataset_mismatch_names_the_dimension() {
    let t = Setup::new("");
    let ds = t.path("ds");
    t.run(&["gen-data", "--out", s(&ds)]);
    let other = t.path("other.toml");
    fs::write(&other, fs::read_to_string(&t.config).unwrap().replace("n_rho = 8", "n_rho = 4")).unwrap();
    let out = tttk(&["--config", s(&other), "fbp", "--dataset", s(&ds), "--out", s(&t.path("f.tttk"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("n_rho is 8"), "{err}");
}

#[test]
fn eval_on_labels_reports_exact_matches() {
    let t = Setup::new("");
    let ds_dir = t.path("ds");
    t.run(&["gen-data", "--out", s(&ds_dir)]);
    let labels = Tensor::<f64>::load(ds_dir.join("labels.tttk")).unwrap();
    let test: Vec<_> = (6..8).map(|i| labels.slice(i).unwrap()).collect();
    let pred = t.path("pred.tttk");
    Tensor::stack(&test).unwrap().save(&pred).unwrap();
    let csv = t.path("psnr.csv");
    let stdout = t.run(&["eval", "--pred", s(&pred), "--dataset", s(&ds_dir), "--csv", s(&csv)]);
    assert!(stdout.contains("undefined"), "{stdout}");
    assert_eq!(fs::read_to_string(&csv).unwrap(), "sample,psnr_db\n6,exact\n7,exact\n");
}

#[test]
fn fbp_of_zero_data_renders_uniform_grey() {
    let t = Setup::new("");
    let d = t.path("zero.tttk");
    Tensor::new(vec![16, 16], vec![0.0f64; 256]).unwrap().save(&d).unwrap();
    let rec = t.path("rec.tttk");
    t.run(&["fbp", "--data", s(&d), "--out", s(&rec)]);
    let r = Tensor::<f64>::load(&rec).unwrap();
    assert_eq!(r.dims, [1, 8, 16]);
    assert!(r.data.iter().all(|v| *v == 0.0));
    let png = t.path("rec.png");
    t.run(&["render", "--field", s(&rec), "--size", "48", "--out", s(&png)]);
    let img = image::open(&png).unwrap().to_rgb8();
    let mut inside = 0;
    for (px, py, c) in img.enumerate_pixels() {
        let x = -1.0 + (px as f64 + 0.5) / 24.0;
        let y = -1.0 + (py as f64 + 0.5) / 24.0;
        if x * x + y * y <= 1.0 {
            inside += 1;
            assert_eq!(c.0, [221, 221, 221]);
        }
    }
    assert!(inside > 1500);
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(png.with_extension("json")).unwrap()).unwrap();
    assert_eq!(side["scale"], 1.0);
}

#[test]
fn fbp_matches_library() {
    let t = Setup::new("");
    let ds_dir = t.path("ds");
    t.run(&["gen-data", "--out", s(&ds_dir)]);
    let rec = t.path("rec.tttk");
    t.run(&["--threads", "2", "fbp", "--dataset", s(&ds_dir), "--split", "all", "--out", s(&rec)]);
    let cfg = t.cfg();
    let ds = Dataset::<f64>::load(&ds_dir).unwrap();
    let k = commands::kernel(&cfg).unwrap();
    let fields = commands::fbp_fields(&cfg, &k, &ds.inputs).unwrap();
    let stored = Tensor::<f64>::load(&rec).unwrap();
    assert_eq!(stored.dims, [8, 8, 16]);
    let flat: Vec<f64> = fields.iter().flat_map(|f| f.values.clone()).collect();
    assert_eq!(stored.data, flat);
}

#[test]
fn train_predict_eval_match_in_process() {
    let t = Setup::new("");
    let ds_dir = t.path("ds");
    t.run(&["gen-data", "--out", s(&ds_dir)]);
    let ckpt = t.path("ckpt");
    t.run(&["train", "--dataset", s(&ds_dir), "--out", s(&ckpt)]);
    let pred = t.path("pred.tttk");
    t.run(&["predict", "--checkpoint", s(&ckpt), "--dataset", s(&ds_dir), "--out", s(&pred)]);
    let csv = t.path("psnr.csv");
    let stdout = t.run(&["eval", "--pred", s(&pred), "--dataset", s(&ds_dir), "--csv", s(&csv)]);

    let ds = Dataset::<f64>::load(&ds_dir).unwrap();
    let c = Checkpoint::<f32>::load(&ckpt).unwrap();
    assert_eq!(c.history.as_ref().unwrap().epochs.len(), 2);
    let net = Net::new(c.arch).unwrap();
    let test = Samples::<f32>::inverse(&ds, ds.test_range()).unwrap();

    let direct = predict(&net, &c.params, &test.inputs, 64).unwrap();
    let stored = Tensor::<f32>::load(&pred).unwrap();
    assert_eq!(stored.dims, [2, 8, 16]);
    // stored in polar order, the network works in [theta][rho] order
    for i in 0..2 {
        for j in 0..16 {
            for k in 0..8 {
                assert_eq!(stored.data[i * 128 + k * 16 + j].to_bits(), direct[i * 128 + j * 8 + k].to_bits());
            }
        }
    }

    let want = evaluate_psnr(&net, &c.params, &test, 64).unwrap();
    let rows: Vec<String> = fs::read_to_string(&csv).unwrap().lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 2);
    for (row, w) in rows.iter().zip(&want) {
        let v = row.split(',').nth(1).unwrap();
        match w {
            Some(Psnr::Db(db)) => assert_eq!(v.parse::<f64>().unwrap().to_bits(), db.to_bits()),
            Some(Psnr::ExactMatch) => assert_eq!(v, "exact"),
            None => assert_eq!(v, "degenerate"),
        }
    }
    let mean = tttk_nn::loss::mean_psnr(&want).unwrap();
    assert!(stdout.contains(&format!("{mean:.4}")), "{stdout}");

    // retraining from the same seeds reproduces the checkpoint
    let again = t.path("ckpt2");
    t.run(&["--threads", "2", "train", "--dataset", s(&ds_dir), "--out", s(&again)]);
    assert_eq!(dir_bytes(&ckpt), dir_bytes(&again));
}

#[test]
fn linearize_writes_dense_kernel_and_applies_it() {
    let t = Setup::new("");
    let kfile = t.path("k.tttk");
    let f = t.path("f.tttk");
    let grid = t.cfg().polar().unwrap();
    let field = tttk_core::PolarField::from_fn(grid, |x: f64, y: f64| (x - 0.2).powi(2) + y);
    Tensor::from_polar(&field).save(&f).unwrap();
    let dout = t.path("d.tttk");
    t.run(&["linearize", "--out", s(&kfile), "--apply", s(&f), "--data-out", s(&dout)]);
    let k = commands::kernel(&t.cfg()).unwrap();
    let stored = Tensor::<f64>::load(&kfile).unwrap();
    assert_eq!(stored.dims, k.shape().to_vec());
    assert_eq!(stored.data, k.dense());
    let d = Tensor::<f64>::load(&dout).unwrap();
    assert_eq!(d.dims, [1, 16, 16]);
    assert_eq!(d.data, k.apply(&field).unwrap().data);
}
