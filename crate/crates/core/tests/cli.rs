use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rgnn_lab::generate::{red_end_path, red_green_palette};
use rgnn_lab::model::validate_simple_json;
use rgnn_lab::{Graph, RVector};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rgnn-lab"));
    c.env_remove("RGNN_LAB_MAX_STEPS_DEFAULT");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("gallery").join(format!("{name}.json"))
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    (
        status.code().unwrap(),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

fn json(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|e| panic!("{e}: {s}"))
}

fn write_graph(dir: &TempDir, name: &str, g: &Graph) -> PathBuf {
    let p = dir.path().join(name);
    g.save(&p).unwrap();
    p
}

fn scalar_graph(dir: &TempDir) -> PathBuf {
    let g = Graph::from_indexed(
        vec![RVector::from_ints(&[-1]), RVector::from_ints(&[2]), RVector::from_ints(&[0])],
        &[(0, 1), (1, 2)],
    )
    .unwrap();
    write_graph(dir, "scalar.json", &g)
}

fn rg_graph(dir: &TempDir) -> PathBuf {
    let pal = red_green_palette();
    let g = Graph::from_indexed(vec![pal[0].clone(), pal[1].clone(), pal[2].clone(), pal[2].clone()], &[(0, 1), (1, 2)])
        .unwrap();
    write_graph(dir, "rg.json", &g)
}

#[test]
fn run_halting_const_label() {
    let dir = TempDir::new().unwrap();
    let g = scalar_graph(&dir);
    let trace = dir.path().join("t.jsonl");
    let (code, out, _) = run(bin()
        .args(["run", "--semantics", "halting", "--model"])
        .arg(fixture("const-label"))
        .arg("--graph")
        .arg(&g)
        .arg("--trace")
        .arg(&trace));
    assert_eq!(code, 0);
    let s = json(&out);
    assert_eq!(s["k"], 0);
    assert_eq!(s["certificate"], "all-halted");
    assert_eq!(s["output"]["v0"], false);
    assert_eq!(s["output"]["v1"], true);
    assert_eq!(s["output"]["v2"], true);
    let lines: Vec<Value> = std::fs::read_to_string(&trace).unwrap().lines().map(json).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["step"], 0);
    assert_eq!(lines[1]["kGamma"]["v0"], 0);
}

#[test]
fn run_exit_codes() {
    let dir = TempDir::new().unwrap();
    let g = rg_graph(&dir);
    let (code, out, _) = run(bin()
        .args(["run", "--semantics", "converging", "--max-steps", "10", "--model"])
        .arg(fixture("strict-counter"))
        .arg("--graph")
        .arg(&g));
    assert_eq!(code, 3);
    assert_eq!(json(&out)["certificate"], "budget-exhausted");

    let (code, out, _) = run(bin()
        .args(["run", "--semantics", "output-converging", "--window", "4", "--model"])
        .arg(fixture("osc-const-out"))
        .arg("--graph")
        .arg(&g));
    assert_eq!(code, 0);
    assert_eq!(json(&out)["certificate"], "output-cycle");
    assert_eq!(json(&out)["k"], 0);

    let (code, out, _) = run(bin()
        .args(["run", "--semantics", "output-converging", "--model"])
        .arg(fixture("osc-flip-out"))
        .arg("--graph")
        .arg(&g));
    assert_eq!(code, 4);
    assert_eq!(json(&out)["output"], Value::Null);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    let (code, _, err) = run(bin()
        .args(["run", "--semantics", "halting", "--model"])
        .arg(fixture("reach-red"))
        .arg("--graph")
        .arg(&bad));
    assert_eq!(code, 2);
    assert!(err.contains("parse error"), "{err}");

    let (code, _, _) = run(bin().args(["run", "--semantics", "halting"]));
    assert_eq!(code, 2);
}

#[test]
fn max_steps_default_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let g = write_graph(&dir, "p.json", &red_end_path(6));
    let args = |c: &mut Command| {
        c.args(["run", "--semantics", "converging", "--model"])
            .arg(fixture("reach-conv"))
            .arg("--graph")
            .arg(&g);
    };
    let mut c = bin();
    args(&mut c);
    assert_eq!(run(&mut c).0, 0);
    let mut c = bin();
    args(&mut c);
    c.env("RGNN_LAB_MAX_STEPS_DEFAULT", "2");
    assert_eq!(run(&mut c).0, 3);
    let mut c = bin();
    args(&mut c);
    c.env("RGNN_LAB_MAX_STEPS_DEFAULT", "lots");
    assert_eq!(run(&mut c).0, 2);
}

#[test]
fn transform_examples() {
    let (code, out, _) = run(bin()
        .args(["transform", "--direction", "c2h", "--simple", "--model"])
        .arg(fixture("green-eq-red")));
    assert_eq!(code, 0);
    let doc = json(&out);
    assert_eq!(doc["kind"], "halting");
    assert_eq!(doc["provenance"]["transform"], "c2h");
    assert!(validate_simple_json(&doc).is_ok());

    let (code, out, _) = run(bin()
        .args(["transform", "--direction", "h2c", "--simple", "--bound", "1", "--model"])
        .arg(fixture("reach-red")));
    assert_eq!(code, 0);
    let doc = json(&out);
    assert_eq!(doc["kind"], "rgnn");
    assert_eq!(doc["provenance"]["bound"], "1");
    assert!(validate_simple_json(&doc).is_ok());

    let (code, out, _) = run(bin()
        .args(["transform", "--direction", "h2c", "--model"])
        .arg(fixture("reach-red-max")));
    assert_eq!(code, 0);
    assert_eq!(json(&out)["provenance"]["variant"], "general");

    let (code, _, err) = run(bin()
        .args(["transform", "--direction", "h2c", "--simple", "--bound", "1", "--model"])
        .arg(fixture("reach-red-max")));
    assert_eq!(code, 2);
    assert!(err.contains("not simple"), "{err}");

    let (code, _, err) = run(bin()
        .args(["transform", "--direction", "h2c", "--simple", "--model"])
        .arg(fixture("reach-red")));
    assert_eq!(code, 2);
    assert!(err.contains("--bound"), "{err}");
}

#[test]
fn transformed_model_runs_from_file() {
    let dir = TempDir::new().unwrap();
    let g = write_graph(&dir, "p.json", &red_end_path(5));
    let derived = dir.path().join("c.json");
    let (code, _, _) = run(bin()
        .args(["transform", "--direction", "h2c", "--simple", "--bound", "1", "--model"])
        .arg(fixture("reach-red"))
        .arg("--output")
        .arg(&derived));
    assert_eq!(code, 0);
    let (code, out, _) = run(bin()
        .args(["run", "--semantics", "converging", "--model"])
        .arg(&derived)
        .arg("--graph")
        .arg(&g));
    assert_eq!(code, 0);
    let s = json(&out);
    assert_eq!(s["certificate"], "state-fixed-point");
    for v in 0..5 {
        assert_eq!(s["output"][format!("v{v}")], true);
    }
}

#[test]
fn verify_examples() {
    let dir = TempDir::new().unwrap();
    let g = write_graph(&dir, "p.json", &red_end_path(7));
    let two = Graph::from_indexed(
        vec![
            RVector::from_ints(&[1, 0]),
            RVector::from_ints(&[0, 0]),
            RVector::from_ints(&[0, 0]),
            RVector::from_ints(&[0, 0]),
            RVector::from_ints(&[0, 0]),
        ],
        &[(0, 1), (2, 3), (3, 4)],
    )
    .unwrap();
    let g2 = write_graph(&dir, "two.json", &two);
    let stats = dir.path().join("gaps.csv");
    let (code, out, _) = run(bin()
        .args(["verify", "--simple", "--bound", "1", "--jobs", "2", "--model"])
        .arg(fixture("reach-red"))
        .arg("--graph")
        .arg(&g)
        .arg(&g2)
        .arg("--stats")
        .arg(&stats));
    assert_eq!(code, 0);
    let reports = json(&out);
    assert_eq!(reports.as_array().unwrap().len(), 2);
    assert!(reports[0]["report"]["max_phi_gap"].as_u64().unwrap() >= 1);
    let comps = &reports[1]["report"]["components"];
    let k = reports[1]["report"]["k"].as_u64().unwrap();
    assert_eq!(comps["v0"]["k_gamma"].as_u64().unwrap(), k);
    assert!(comps["v2"]["k_gamma"].as_u64().unwrap() < k);
    let csv = std::fs::read_to_string(&stats).unwrap();
    assert!(csv.starts_with("gap,count\n0,"), "{csv}");

    let (code, out, _) = run(bin()
        .args(["verify", "--model"])
        .arg(fixture("reach-red"))
        .arg("--graph")
        .arg(&g2));
    assert_eq!(code, 0);
    assert_eq!(json(&out)["components"].as_object().unwrap().len(), 2);
}

#[test]
fn verify_flags_a_corrupted_trace() {
    let dir = TempDir::new().unwrap();
    let g = write_graph(&dir, "p.json", &red_end_path(4));
    let derived = dir.path().join("c.json");
    let (tc, th) = (dir.path().join("c.jsonl"), dir.path().join("h.jsonl"));
    assert_eq!(
        run(bin()
            .args(["transform", "--direction", "h2c", "--model"])
            .arg(fixture("reach-red"))
            .arg("--output")
            .arg(&derived))
        .0,
        0
    );
    let (code, _, _) = run(bin()
        .args(["run", "--semantics", "halting", "--model"])
        .arg(fixture("reach-red"))
        .arg("--graph")
        .arg(&g)
        .arg("--trace")
        .arg(&th));
    assert_eq!(code, 0);

    // the converging trace must carry events, so it comes from the library
    let file = rgnn_lab::gallery::get("reach-red").unwrap();
    let c = rgnn_lab::transform::to_converging(file.as_halting().unwrap()).unwrap();
    let graph = Graph::load(&g).unwrap();
    let trace = rgnn_lab::semantics::trace_converging(&c.derived, &graph, 100, Some(&c.observer)).unwrap();
    std::fs::write(&tc, rgnn_lab::semantics::trace_to_string(&trace)).unwrap();

    let verify = |tc: &Path| {
        run(bin()
            .args(["verify", "--model"])
            .arg(fixture("reach-red"))
            .arg("--graph")
            .arg(&g)
            .arg("--derived")
            .arg(&derived)
            .arg("--trace-c")
            .arg(tc)
            .arg("--trace-h")
            .arg(&th))
    };
    assert_eq!(verify(&tc).0, 0);

    let bad = rgnn_lab::verify::inject(&trace, rgnn_lab::verify::Fault::State { j: 2, v: 1, index: 5 });
    let bad_path = dir.path().join("bad.jsonl");
    std::fs::write(&bad_path, rgnn_lab::semantics::trace_to_string(&bad)).unwrap();
    let (code, out, _) = verify(&bad_path);
    assert_eq!(code, 1);
    let report = json(&out);
    let failures = report["failures"].as_array().unwrap();
    assert!(failures.iter().any(|f| f["check"] == "coherence-3"), "{out}");
}

#[test]
fn gen_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        let (code, _, _) = run(bin().args(["gen", "--random-graph", "n=6", "p=1/2", "seed=7", "--output"]).arg(p));
        assert_eq!(code, 0);
    }
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(x, y);
    assert_eq!(Graph::load(&a).unwrap().len(), 6);
    let (code, _, _) = run(bin().args(["gen", "--random-graph", "n=6", "p=1/2"]));
    assert_eq!(code, 2);
    let (code, _, _) = run(bin().args(["gen", "--random-graph", "n=6", "p=1/2", "seed=1", "colour=red"]));
    assert_eq!(code, 2);
}

#[test]
fn gen_gallery_copies_the_fixture() {
    let (code, out, _) = run(bin().args(["gen", "--gallery", "reach-red"]));
    assert_eq!(code, 0);
    assert_eq!(out, std::fs::read_to_string(fixture("reach-red")).unwrap());
    assert_eq!(run(bin().args(["gen", "--gallery", "missing"])).0, 2);
}

#[test]
fn bisim_subcommands() {
    let dir = TempDir::new().unwrap();
    let pair = dir.path().join("pair");
    let (code, _, _) = run(bin().args(["gen", "--bisim-pair", "cycle-cover", "n=3", "k=2", "--output"]).arg(&pair));
    assert_eq!(code, 0);
    let (g, h, z) = (pair.join("g.json"), pair.join("h.json"), pair.join("relation.json"));
    assert_eq!(Graph::load(&g).unwrap().len(), 6);
    assert_eq!(Graph::load(&h).unwrap().len(), 3);

    let (code, out, _) = run(bin().args(["bisim", "check", "--g"]).arg(&g).arg("--h").arg(&h).arg("--relation").arg(&z));
    assert_eq!(code, 0);
    assert_eq!(json(&out)["ok"], true);
    assert_eq!(json(&out)["totalSurjective"], true);

    let (code, out, _) = run(bin().args(["bisim", "coarsest", "--g"]).arg(&g).arg("--h").arg(&h));
    assert_eq!(code, 0);
    assert_eq!(json(&out)["blocks"].as_array().unwrap().len(), 1);

    let (code, out, _) = run(bin()
        .args(["bisim", "invariance", "--g"])
        .arg(&g)
        .arg("--h")
        .arg(&h)
        .arg("--relation")
        .arg(&z)
        .arg("--model")
        .arg(fixture("reach-red")));
    assert_eq!(code, 0);
    assert_eq!(json(&out)["invariant"], true);

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, r#"{"pairs":[["v0","v0"],["v1","v0"]]}"#).unwrap();
    let (code, out, _) = run(bin().args(["bisim", "check", "--g"]).arg(&g).arg("--h").arg(&h).arg("--relation").arg(&broken));
    assert_eq!(code, 1);
    assert_eq!(json(&out)["violation"]["g"], "v0");

    for kind in [&["duplication", "n=5", "p=1/2", "seed=3"][..], &["random-cover", "n=4", "k=3", "p=1/2", "seed=3"]] {
        let (code, out, _) = run(bin().args(["gen", "--bisim-pair"]).args(kind));
        assert_eq!(code, 0, "{kind:?}");
        let doc = json(&out);
        let g = Graph::from_json(&doc["g"].to_string()).unwrap();
        let h = Graph::from_json(&doc["h"].to_string()).unwrap();
        let z = rgnn_lab::bisim::Relation::from_json(&doc["relation"].to_string(), &g, &h).unwrap();
        assert!(rgnn_lab::bisim::check_graded_bisimulation(&g, &h, &z).ok);
    }
}
