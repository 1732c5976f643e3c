use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scodec::container::Container;
use scodec::kv::KeyValues;
use scodec::pipeline::image_io::save_image;
use scodec::Tensor;
use tempfile::TempDir;

fn scodec() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_scodec"));
    c.env_remove("SCODEC_WEIGHTS");
    c
}

fn run(args: &[&str]) -> Output {
    scodec().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn golden() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Env {
    dir: TempDir,
    weights: PathBuf,
    image: PathBuf,
}

fn setup() -> Env {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("w.scwt");
    let o = run(&["init-weights", "-o", s(&weights), "--preset", "tiny", "--seed", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let image = dir.path().join("img.png");
    let t = Tensor::from_fn([1, 3, 90, 130], |_, c, y, x| ((c * 41 + y * 3 + x * 2) % 97) as f32 / 96.0);
    save_image(&image, &t).unwrap();
    Env { dir, weights, image }
}

#[test]
fn init_weights_reproduces_the_golden_model() {
    let e = setup();
    assert_eq!(std::fs::read(&e.weights).unwrap(), std::fs::read(golden().join("tiny.scwt")).unwrap());
}

#[test]
fn inspect_golden_container() {
    let o = run(&["inspect", s(&golden().join("tiny.scbs"))]);
    assert!(o.status.success());
    let out = stdout(&o);
    let fixture = KeyValues::parse(&std::fs::read_to_string(golden().join("expected.txt")).unwrap()).unwrap();
    for key in ["width", "height", "model_id"] {
        let line = format!("{key:<10}{}", fixture.get(key).unwrap());
        assert!(out.lines().any(|l| l == line), "missing `{line}` in\n{out}");
    }
    assert!(out.contains("stream  offset  bytes"));
}

#[test]
fn roundtrip_reports_lossless_symbols() {
    let e = setup();
    let o = run(&["roundtrip", s(&e.image), "--weights", s(&e.weights)]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.lines().any(|l| l == "symbols: LOSSLESS"), "{out}");
    assert!(out.contains("psnr_db: "));
}

#[test]
fn encode_decode_and_color_payload_size() {
    let e = setup();
    let a = e.dir.path().join("a.scbs");
    let b = e.dir.path().join("b.scbs");
    let o = run(&["encode", s(&e.image), "-o", s(&a), "--weights", s(&e.weights)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1);
    assert!(stdout(&o).starts_with("bytes="));
    assert!(run(&["encode", s(&e.image), "-o", s(&b), "--weights", s(&e.weights), "--no-color-fix"]).status.success());
    let (la, lb) = (std::fs::metadata(&a).unwrap().len(), std::fs::metadata(&b).unwrap().len());
    assert_eq!(la - lb, 12);

    let out = e.dir.path().join("out.png");
    assert!(run(&["decode", s(&a), "-o", s(&out), "--weights", s(&e.weights)]).status.success());
    let img = scodec::pipeline::image_io::load_image(&out).unwrap();
    assert_eq!(img.shape(), [1, 3, 90, 130]);
}

#[test]
fn tiled_encode_keeps_the_symbols() {
    let e = setup();
    let big = e.dir.path().join("big.png");
    let t = Tensor::from_fn([1, 3, 1536, 2048], |_, c, y, x| ((c * 7 + y / 5 + x / 3) % 64) as f32 / 63.0);
    save_image(&big, &t).unwrap();
    let plain = e.dir.path().join("plain.scbs");
    let tiled = e.dir.path().join("tiled.scbs");
    let w = s(&e.weights);
    assert!(run(&["encode", s(&big), "-o", s(&plain), "--weights", w]).status.success());
    let o = run(&["encode", s(&big), "-o", s(&tiled), "--weights", w, "--tile", "512", "--overlap", "64"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = Container::from_bytes(&std::fs::read(&plain).unwrap()).unwrap();
    let t = Container::from_bytes(&std::fs::read(&tiled).unwrap()).unwrap();
    assert_eq!(p.streams, t.streams);
    assert!(t.header.tiled && !p.header.tiled);
}

#[test]
fn exit_codes() {
    let e = setup();
    let w = s(&e.weights);
    let missing = e.dir.path().join("missing.png");
    assert_eq!(run(&["encode", s(&missing), "-o", "x", "--weights", w]).status.code(), Some(1));

    let junk = e.dir.path().join("junk.scbs");
    std::fs::write(&junk, b"SCBX and more bytes than a header needs").unwrap();
    let o = run(&["decode", s(&junk), "-o", "x.png", "--weights", w]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte 0"));

    let other = e.dir.path().join("other.scwt");
    assert!(run(&["init-weights", "-o", s(&other), "--preset", "tiny", "--seed", "8"]).status.success());
    let o = run(&["decode", s(&golden().join("tiny.scbs")), "-o", "x.png", "--weights", s(&other)]);
    assert_eq!(o.status.code(), Some(3));

    assert_eq!(run(&["encode", s(&e.image), "-o", "x"]).status.code(), Some(2));
    let o = run(&["encode", s(&e.image), "-o", "x", "--weights", w, "--tile", "512"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(&["encode", s(&e.image), "-o", "x", "--weights", w, "--tile", "300", "--overlap", "64"]).status.code(), Some(2));
}

#[test]
fn config_file_env_and_flag_precedence() {
    let e = setup();
    let cfg = e.dir.path().join("scodec.conf");
    std::fs::write(&cfg, format!("# settings\nweights={}\ncolor_fix=false\nthreads=1\n", s(&e.weights))).unwrap();
    let a = e.dir.path().join("a.scbs");
    let o = run(&["--config", s(&cfg), "encode", s(&e.image), "-o", s(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(Container::from_bytes(&std::fs::read(&a).unwrap()).unwrap().color.is_none());

    // The flag wins over the config file.
    let o = run(&["--config", s(&cfg), "encode", s(&e.image), "-o", s(&a), "--weights", "/nonexistent.scwt"]);
    assert_eq!(o.status.code(), Some(1));

    let o = scodec()
        .env("SCODEC_WEIGHTS", &e.weights)
        .args(["roundtrip", s(&e.image)])
        .output()
        .unwrap();
    assert!(stdout(&o).contains("symbols: LOSSLESS"));

    std::fs::write(&cfg, "colour_fix=false\n").unwrap();
    assert_eq!(run(&["--config", s(&cfg), "inspect", s(&a)]).status.code(), Some(2));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let e = setup();
    let w = s(&e.weights);
    let mut outs = Vec::new();
    for threads in ["1", "4"] {
        let c = e.dir.path().join(format!("t{threads}.scbs"));
        let r = e.dir.path().join(format!("t{threads}.ppm"));
        assert!(run(&["--threads", threads, "encode", s(&e.image), "-o", s(&c), "--weights", w]).status.success());
        assert!(run(&["--threads", threads, "decode", s(&c), "-o", s(&r), "--weights", w, "--predictor", "toy"]).status.success());
        outs.push((std::fs::read(&c).unwrap(), std::fs::read(&r).unwrap()));
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn eval_writes_a_report() {
    let e = setup();
    let corpus = e.dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    for k in 0..2 {
        let t = Tensor::from_fn([1, 3, 40 + k, 50], |_, c, y, x| ((c + y * (k + 2) + x) % 17) as f32 / 16.0);
        save_image(corpus.join(format!("{k}.png")), &t).unwrap();
    }
    let other = e.dir.path().join("other.scwt");
    assert!(run(&["init-weights", "-o", s(&other), "--preset", "tiny", "--seed", "3"]).status.success());
    let svg = e.dir.path().join("curve.svg");
    let o = run(&[
        "eval",
        s(&corpus),
        "--model",
        &format!("a={}", s(&e.weights)),
        "--model",
        &format!("b={}", s(&other)),
        "--svg",
        s(&svg),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1 + 4 + 2);
    assert!(out.starts_with("kind\timage\tmodel"));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let empty = e.dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(run(&["eval", s(&empty), "--weights", s(&e.weights)]).status.code(), Some(2));
}

#[test]
fn bench_prints_every_stage() {
    let e = setup();
    let o = run(&["bench", s(&e.image), "--weights", s(&e.weights), "--runs", "2", "--warmup", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    for stage in ["g_a", "entropy-encode", "entropy-decode", "g_s", "denoise", "aux", "pixel-decode"] {
        assert!(out.lines().any(|l| l.split_whitespace().next() == Some(stage)), "{stage} missing:\n{out}");
    }
}
