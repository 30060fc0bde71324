use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hmhe::{load_image, save_image, BitDepth, ImageBuffer};
use serde_json::Value;
use tempfile::TempDir;

fn hmhe(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmhe"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(out: Output) -> Output {
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_png(dir: &Path, name: &str, img: &ImageBuffer) -> PathBuf {
    let path = dir.join(name);
    save_image(img, &path, BitDepth::Eight).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_column(path: &Path, column: &str) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

fn ramp(x: usize) -> f64 {
    60.0 + 0.1 * x as f64
}

fn checker(n: usize) -> ImageBuffer {
    ImageBuffer::from_fn(n, n, 256, |x, y| {
        if ((x / 2) + (y / 2)) % 2 == 0 { ramp(x) + 60.0 } else { ramp(x) }
    })
}

fn blobs(n: usize, sigma: f64) -> ImageBuffer {
    let centres = [(0.25, 0.3), (0.7, 0.25), (0.45, 0.75), (0.85, 0.8)];
    ImageBuffer::from_fn(n, n, 256, |x, y| {
        let bump: f64 = centres
            .iter()
            .map(|&(cx, cy)| {
                let dx = x as f64 - cx * n as f64;
                let dy = y as f64 - cy * n as f64;
                (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
            })
            .sum();
        (ramp(x) + 60.0 * bump).round()
    })
}

fn foggy_scene(n: usize) -> ImageBuffer {
    ImageBuffer::from_fn(n, n, 256, |x, y| {
        let detail = if ((x / 6) + (y / 6)) % 2 == 0 { 12.0 } else { 0.0 };
        (90.0 + 0.3 * x as f64 + detail).round()
    })
}

#[test]
fn enhance_writes_outputs_and_manifest() {
    let dir = TempDir::new().unwrap();
    let input = write_png(dir.path(), "scene.png", &foggy_scene(96));
    ok(hmhe(
        &["enhance", input.to_str().unwrap(), "-o", "out", "--emit-intermediates", "--jobs", "2"],
        dir.path(),
    ));
    let out = dir.path().join("out");
    for name in ["scene_hmhe.png", "scene_illumination.png", "scene_homogeneous.png", "scene_sweep.csv"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let enhanced = load_image(out.join("scene_hmhe.png")).unwrap();
    assert_eq!((enhanced.width(), enhanced.height()), (96, 96));
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "enhance");
    assert_eq!(manifest["inputs"][0]["ok"], true);
    assert!(manifest["inputs"][0]["k_cutoff"].as_u64().unwrap() >= 5);
    assert_eq!(csv_column(&out.join("scene_sweep.csv"), "J").len(), csv_column(&out.join("scene_sweep.csv"), "k").len());
}

#[test]
fn fixed_kernel_skips_sweep() {
    let dir = TempDir::new().unwrap();
    let input = write_png(dir.path(), "scene.png", &foggy_scene(96));
    ok(hmhe(
        &["enhance", input.to_str().unwrap(), "--alpha", "1", "--no-sweep", "--kernel", "48", "-o", "out", "--emit-intermediates"],
        dir.path(),
    ));
    let out = dir.path().join("out");
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["inputs"][0]["k_cutoff"], 49);
    assert_eq!(manifest["config"]["alpha"], 1.0);
    assert!(!out.join("scene_sweep.csv").exists());
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let input = write_png(dir.path(), "scene.png", &foggy_scene(96));
    let input = input.to_str().unwrap();
    ok(hmhe(&["enhance", input, "--seed", "7", "--alpha", "0.6", "-o", "a"], dir.path()));
    ok(hmhe(&["enhance", input, "--config", "a/manifest.json", "-o", "b"], dir.path()));
    let a = std::fs::read(dir.path().join("a/scene_hmhe.png")).unwrap();
    let b = std::fs::read(dir.path().join("b/scene_hmhe.png")).unwrap();
    assert_eq!(a, b);
    let manifest = read_json(&dir.path().join("b/manifest.json"));
    assert_eq!(manifest["config"]["noise_seed"], 7);
    assert_eq!(manifest["config"]["alpha"], 0.6);
}

#[test]
fn no_sweep_without_kernel_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let input = write_png(dir.path(), "scene.png", &foggy_scene(64));
    let out = hmhe(&["enhance", input.to_str().unwrap(), "--no-sweep"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn bad_alpha_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let input = write_png(dir.path(), "scene.png", &foggy_scene(64));
    let out = hmhe(&["enhance", input.to_str().unwrap(), "--alpha", "1.5"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn unreadable_input_is_partial_failure() {
    let dir = TempDir::new().unwrap();
    let input = write_png(dir.path(), "scene.png", &foggy_scene(64));
    std::fs::write(dir.path().join("junk.png"), b"not an image").unwrap();
    let out = hmhe(&["enhance", input.to_str().unwrap(), "junk.png", "-o", "out"], dir.path());
    assert_eq!(code(&out), 1);
    let manifest = read_json(&dir.path().join("out/manifest.json"));
    assert_eq!(manifest["inputs"][0]["ok"], true);
    assert_eq!(manifest["inputs"][1]["ok"], false);
    assert!(dir.path().join("out/scene_hmhe.png").is_file());
}

#[test]
fn sweep_of_constant_image_is_flat_and_flagged() {
    let dir = TempDir::new().unwrap();
    let input = write_png(dir.path(), "flat.png", &ImageBuffer::filled(64, 64, 100.0, 256));
    ok(hmhe(&["sweep", input.to_str().unwrap(), "-o", "flat.csv"], dir.path()));
    let ssim = csv_column(&dir.path().join("flat.csv"), "ssim");
    assert!(!ssim.is_empty());
    for v in &ssim {
        assert_eq!(v.parse::<f64>().unwrap(), 1.0);
    }
    let manifest = read_json(&dir.path().join("flat.manifest.json"));
    assert_eq!(manifest["extra"]["degenerate_curve"], true);
    assert_eq!(manifest["inputs"][0]["warnings"][0], "degenerate_curve");
}

#[test]
fn sweep_orders_fine_texture_before_coarse_blobs() {
    let dir = TempDir::new().unwrap();
    let fine = write_png(dir.path(), "fine.png", &checker(256));
    let coarse = write_png(dir.path(), "coarse.png", &blobs(256, 20.0));
    ok(hmhe(&["sweep", fine.to_str().unwrap(), "-o", "fine.csv"], dir.path()));
    ok(hmhe(&["sweep", coarse.to_str().unwrap(), "-o", "coarse.csv"], dir.path()));
    let k = |name: &str| read_json(&dir.path().join(name))["extra"]["k_cutoff"].as_u64().unwrap();
    assert!(k("fine.manifest.json") < k("coarse.manifest.json"));
}

#[test]
fn stride_beyond_range_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let input = write_png(dir.path(), "scene.png", &foggy_scene(64));
    let out = hmhe(
        &["sweep", input.to_str().unwrap(), "--k-min", "5", "--k-max", "9", "--stride", "20"],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn compare_original_against_itself_is_perfect() {
    let dir = TempDir::new().unwrap();
    let input = write_png(dir.path(), "scene.png", &foggy_scene(96));
    let input = input.to_str().unwrap();
    ok(hmhe(&["compare", "-r", input, input, "--methods", "original,he,clahe,ssr,hmhe", "-o", "m.csv"], dir.path()));
    let csv = dir.path().join("m.csv");
    let methods = csv_column(&csv, "method");
    assert_eq!(methods, ["original", "he", "clahe", "ssr", "hmhe"]);
    for col in ["SSIM", "FSIM", "CORR"] {
        let v: f64 = csv_column(&csv, col)[0].parse().unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{col} = {v}");
    }
}

#[test]
fn compare_reads_external_results_and_reference_directory() {
    let dir = TempDir::new().unwrap();
    let clear = foggy_scene(64);
    std::fs::create_dir_all(dir.path().join("refs")).unwrap();
    std::fs::create_dir_all(dir.path().join("theirs")).unwrap();
    write_png(&dir.path().join("refs"), "a.png", &clear);
    write_png(&dir.path().join("theirs"), "a.png", &clear);
    let input = write_png(dir.path(), "a.png", &clear.map(|v| (v * 0.5 + 60.0).round()));
    ok(hmhe(
        &["compare", "-r", "refs", input.to_str().unwrap(), "--methods", "original,external:theirs", "-o", "m.csv"],
        dir.path(),
    ));
    let csv = dir.path().join("m.csv");
    assert_eq!(csv_column(&csv, "method"), ["original", "external:theirs"]);
    let ssim: f64 = csv_column(&csv, "SSIM")[1].parse().unwrap();
    assert!((ssim - 1.0).abs() < 1e-12);
}

#[test]
fn compare_missing_reference_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let input = write_png(dir.path(), "a.png", &foggy_scene(64));
    let out = hmhe(&["compare", "-r", "missing.png", input.to_str().unwrap()], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn compare_unknown_method_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let input = write_png(dir.path(), "a.png", &foggy_scene(64));
    let input = input.to_str().unwrap();
    let out = hmhe(&["compare", "-r", input, input, "--methods", "magic"], dir.path());
    assert_eq!(code(&out), 2);
}

fn file_recipe(dir: &Path, beta: f64, noise: f64) -> PathBuf {
    write_png(dir, "clear.png", &foggy_scene(64));
    let recipe = serde_json::json!([{
        "name": "s",
        "clear": { "source": "file", "path": "clear.png" },
        "fog": {
            "beta_ext": beta,
            "distance": 1.0,
            "illum": { "kind": "flat", "level": 200.0 },
            "snake_sigma": noise,
            "seed": 11
        }
    }]);
    let path = dir.join("recipe.json");
    std::fs::write(&path, recipe.to_string()).unwrap();
    path
}

#[test]
fn simulate_without_extinction_keeps_clear_image() {
    let dir = TempDir::new().unwrap();
    let recipe = file_recipe(dir.path(), 0.0, 0.0);
    ok(hmhe(&["simulate", recipe.to_str().unwrap(), "-o", "sim"], dir.path()));
    let clear = std::fs::read(dir.path().join("sim/s_clear.png")).unwrap();
    let foggy = std::fs::read(dir.path().join("sim/s_foggy.png")).unwrap();
    assert_eq!(clear, foggy);
}

#[test]
fn simulate_mean_follows_transmittance() {
    let dir = TempDir::new().unwrap();
    let recipe = file_recipe(dir.path(), 3.0, 0.0);
    ok(hmhe(&["simulate", recipe.to_str().unwrap(), "-o", "sim"], dir.path()));
    let clear = load_image(dir.path().join("sim/s_clear.png")).unwrap();
    let foggy = load_image(dir.path().join("sim/s_foggy.png")).unwrap();
    let t = (-3.0f64).exp();
    let expected = clear.mean() * t + 200.0 * (1.0 - t);
    assert!((foggy.mean() - expected).abs() <= 0.01 * expected, "{} vs {expected}", foggy.mean());
}

#[test]
fn simulate_reruns_are_identical() {
    let dir = TempDir::new().unwrap();
    let recipe = dir.path().join("corpus.json");
    std::fs::write(&recipe, r#"{"corpus":{"count":2,"seed":5,"width":64,"height":64}}"#).unwrap();
    ok(hmhe(&["simulate", "corpus.json", "-o", "a"], dir.path()));
    ok(hmhe(&["simulate", "corpus.json", "-o", "b", "--jobs", "1"], dir.path()));
    for name in ["scene_000_foggy.png", "scene_001_foggy.png", "recipes.json"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    ok(hmhe(&["simulate", "a/recipes.json", "-o", "c"], dir.path()));
    let a = std::fs::read(dir.path().join("a/scene_001_foggy.png")).unwrap();
    let c = std::fs::read(dir.path().join("c/scene_001_foggy.png")).unwrap();
    assert_eq!(a, c);
}
