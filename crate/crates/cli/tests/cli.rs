//! The `dogma` binary: exit codes, determinism, inspect output and the
//! report schema.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dogma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dogma")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
seed = 4
output = "out"

[inputs]
dir = "corpus"

[features]
pca_dim = 20

[topology]
delta = 2.0

[synth]
n_genes = 200
program_size = 10
n_background_terms = 6
cells_per_type_per_domain = 10
query_fraction = 0.2
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("dogma.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), stdout(o), stderr(o));
}

fn files_below(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Synthesizes and builds; returns the config path.
fn synth_and_build(dir: &Path, text: &str) -> PathBuf {
    let cfg = write_config(dir, text);
    let c = cfg.to_str().unwrap();
    ok(&dogma(&["synth", "--config", c]));
    ok(&dogma(&["build", "--config", c]));
    cfg
}

#[test]
fn build_and_inspect_agree_with_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    synth_and_build(tmp.path(), SMALL);
    let graph = tmp.path().join("out/graph");
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(graph.join("manifest.json")).unwrap()).unwrap();
    let edges = manifest["counts"]["edges"].as_u64().unwrap();
    assert!(edges > 0);

    let o = dogma(&["inspect", tmp.path().join("out").to_str().unwrap()]);
    ok(&o);
    let text = stdout(&o);
    assert!(text.contains(&format!("config_hash: {}", manifest["config_hash"].as_str().unwrap())));
    assert!(text.contains(&format!("edges: {edges}\n")));
    let section = |name: &str| -> Vec<(String, u64)> {
        text.split(name)
            .nth(1)
            .unwrap()
            .lines()
            .skip(1)
            .take_while(|l| l.starts_with("  "))
            .map(|l| {
                let mut f = l.trim().split('\t');
                (f.next().unwrap().to_string(), f.next().unwrap().parse().unwrap())
            })
            .collect()
    };
    for (tag, n) in section("edges by provenance:") {
        assert_eq!(manifest["counts"]["by_provenance"][&tag].as_u64().unwrap(), n, "{tag}");
    }
    let degree_sum: u64 = section("degree histogram:").iter().map(|(d, n)| d.parse::<u64>().unwrap() * n).sum();
    assert_eq!(degree_sum, 2 * edges);
    // A graph directory works as well as its parent.
    ok(&dogma(&["inspect", graph.to_str().unwrap()]));
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth_and_build(a.path(), SMALL);
    synth_and_build(b.path(), SMALL);
    assert_eq!(files_below(&a.path().join("corpus")), files_below(&b.path().join("corpus")));
    assert_eq!(files_below(&a.path().join("out/graph")), files_below(&b.path().join("out/graph")));

    let c = tempfile::tempdir().unwrap();
    let cfg = write_config(c.path(), SMALL);
    ok(&dogma(&["synth", "--config", cfg.to_str().unwrap(), "--seed", "5"]));
    assert_ne!(files_below(&a.path().join("corpus")), files_below(&c.path().join("corpus")));
}

#[test]
fn missing_files_fail_with_their_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    let o = dogma(&["build", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(missing.to_str().unwrap()), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), SMALL);
    ok(&dogma(&["synth", "--config", cfg.to_str().unwrap()]));
    let tree = tmp.path().join("corpus/phylogeny.nwk");
    std::fs::remove_file(&tree).unwrap();
    let o = dogma(&["build", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(tree.to_str().unwrap()), "{}", stderr(&o));

    let o = dogma(&["inspect", tmp.path().to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("manifest.json"));

    let o = dogma(&["eval", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn corrupt_matrix_names_the_ingest_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    ok(&dogma(&["synth", "--config", cfg.to_str().unwrap()]));
    let mtx = tmp.path().join("corpus/matrix.mtx");
    let text = std::fs::read_to_string(&mtx).unwrap();
    std::fs::write(&mtx, text.replacen("\n1 ", "\n1 x", 1)).unwrap();
    let o = dogma(&["build", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("ingest"), "{}", stderr(&o));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn unknown_keys_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("delta = 2.0", "delta = 2.0\nk_algn = 3"));
    let o = dogma(&["build", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("k_algn"), "{}", stderr(&o));
}

#[test]
fn priors_off_give_an_edgeless_graph() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace("query_fraction = 0.2", "query_fraction = 0.0").replace(
        "delta = 2.0",
        "delta = 2.0\nenable_align = false\nenable_onto = false\nenable_phy = false",
    );
    synth_and_build(tmp.path(), &text);
    let o = dogma(&["inspect", tmp.path().join("out").to_str().unwrap()]);
    ok(&o);
    let text = stdout(&o);
    assert!(text.contains("edges: 0\n"));
    for tag in ["Align", "Onto", "Phy", "QueryAttach"] {
        assert!(text.contains(&format!("  {tag}\t0\n")), "{text}");
    }
}

#[test]
fn report_validates_against_the_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth_and_build(tmp.path(), SMALL);
    let o = dogma(&["eval", "--config", cfg.to_str().unwrap()]);
    ok(&o);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("out/eval_report.json")).unwrap()).unwrap();
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas/eval_report.schema.json");
    let schema: serde_json::Value = serde_json::from_slice(&std::fs::read(schema_path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&report).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{errors:#?}");

    let s = &report["supervised"][0];
    let (train, val, test) = (s["train"].as_u64().unwrap(), s["val"].as_u64().unwrap(), s["test"].as_u64().unwrap());
    let n = (train + val + test) as f64;
    assert!((train as f64 / n - 0.5).abs() < 0.03);
    assert!((val as f64 / n - 0.2).abs() < 0.03);
    assert!((test as f64 / n - 0.3).abs() < 0.03);
    assert!(stdout(&o).contains(&format!("train/val/test {train}/{val}/{test}")));

    let mut broken = report.clone();
    broken["clustering"][0]["ari"] = serde_json::json!("high");
    assert!(!validator.is_valid(&broken));
}

#[test]
fn clustering_two_cliques_scores_one() {
    // Two types two hops apart in the ontology, Onto edges only, and a
    // neighbour budget above the type size: each type becomes a clique.
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
seed = 1
output = "out"

[inputs]
dir = "corpus"

[features]
pca_dim = 10

[topology]
delta = 2.0
k_onto = 200
enable_align = false
enable_phy = false

[eval]
tasks = ["clustering"]

[synth]
n_species = 2
n_types = 2
n_domains_per_species = 1
cells_per_type_per_domain = 20
n_genes = 100
n_go_programs = 2
program_size = 10
n_background_terms = 2
"#;
    let cfg = synth_and_build(tmp.path(), text);
    let inspect = stdout(&dogma(&["inspect", tmp.path().join("out").to_str().unwrap()]));
    assert!(inspect.contains("  Align\t0\n") && inspect.contains("  Phy\t0\n"));
    ok(&dogma(&["eval", "--config", cfg.to_str().unwrap()]));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("out/eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["clustering"][0]["clusters"].as_u64(), Some(2));
    assert_eq!(report["clustering"][0]["ari"].as_f64(), Some(1.0));
    assert!(report.get("supervised").is_none());
}

#[test]
fn threads_flag_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let c = cfg.to_str().unwrap();
    ok(&dogma(&["--threads", "1", "synth", "--config", c]));
    ok(&dogma(&["build", "--threads", "2", "--config", c]));
    let perf: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("out/perf.json")).unwrap()).unwrap();
    assert_eq!(perf["threads"].as_u64(), Some(2));
    let o = dogma(&["build", "--threads", "0", "--config", c]);
    assert_eq!(o.status.code(), Some(2));
}
