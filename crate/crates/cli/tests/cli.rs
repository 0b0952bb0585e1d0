use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ncel::corpus::load_corpus;
use ncel::kb::{EmbeddingStore, MentionDictionary};
use ncel::model::{Checkpoint, ModelParams, ModelShape};
use tempfile::TempDir;

fn ncel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncel")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ncel(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    ncel(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn body(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn synth(dir: &Path, train_docs: &str) {
    ok(&["gen-synth", "--out-dir", s(dir), "--train-docs", train_docs, "--test-docs", "20"]);
}

/// Trains on `embeddings.txt`, `dictionary.txt` and `train.txt` under `dir`.
fn run_train(dir: &Path, ckpt: &Path, extra: &[&str]) -> String {
    let mut args: Vec<String> = vec!["train".into()];
    for (flag, file) in [("--embeddings", "embeddings.txt"), ("--dictionary", "dictionary.txt"), ("--corpus", "train.txt")] {
        args.push(flag.into());
        args.push(dir.join(file).display().to_string());
    }
    args.push("--checkpoint".into());
    args.push(ckpt.display().to_string());
    args.extend(extra.iter().map(|a| a.to_string()));
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

// ------------------------------------------------------------- build-dict

fn max_oracle(texts: &[&str]) -> BTreeMap<(String, String), f64> {
    let mut best = BTreeMap::new();
    for t in texts {
        for line in t.lines().filter(|l| l.starts_with("m ")) {
            let f: Vec<&str> = line.split_whitespace().collect();
            let p: f64 = f[3].parse().unwrap();
            let e = best.entry((f[1].to_string(), f[2].to_string())).or_insert(p);
            *e = f64::max(*e, p);
        }
    }
    best
}

#[test]
fn build_dict_keeps_the_maximal_prior() {
    let dir = TempDir::new().unwrap();
    let texts = [
        "m England England 0.6\nm England England_cricket_team 0.3\n",
        "m England England_cricket_team 0.4\nm Essex Essex 0.45\n",
        "# third\nm Essex Essex 0.2\nm Essex Essex_County_Cricket_Club 0.55\nm Hussain Nasser_Hussain 0.7\n",
    ];
    let paths: Vec<PathBuf> = texts.iter().enumerate().map(|(i, t)| write(dir.path(), &format!("s{i}"), t)).collect();
    let out = dir.path().join("merged.txt");
    ok(&["build-dict", s(&paths[0]), s(&paths[1]), s(&paths[2]), "-o", s(&out)]);
    let merged = MentionDictionary::load(&out).unwrap();
    let got: BTreeMap<(String, String), f64> = merged
        .iter()
        .flat_map(|(surf, list)| list.iter().map(move |p| ((surf.to_string(), p.entity.clone()), p.prior)))
        .collect();
    assert_eq!(got, max_oracle(&texts));

    // one source is a canonical copy
    let single = dir.path().join("single.txt");
    ok(&["build-dict", s(&paths[0]), "-o", s(&single)]);
    let text = std::fs::read_to_string(&single).unwrap();
    assert_eq!(body(&text), vec!["m England England 0.6", "m England England_cricket_team 0.3"]);

    let bad = write(dir.path(), "bad.txt", "m England England 0.6\nm broken\n");
    let out = ncel(&["build-dict", s(&bad), "-o", s(&single)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.txt:2"));
}

// ------------------------------------------------------------------ train

fn dev_losses(csv: &str) -> Vec<f64> {
    body(csv)
        .iter()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn training_lowers_dev_loss_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    synth(d, "200");
    let a = d.join("a.ck");
    run_train(d, &a, &["--epochs", "3"]);
    let csv = std::fs::read_to_string(d.join("a.ck.loss.csv")).unwrap();
    assert!(csv.contains("# command=train\n") && csv.contains("# seed=7\n"));
    let dev = dev_losses(&csv);
    assert!(dev.last().unwrap() < &dev[0], "{dev:?}");

    let b = d.join("b.ck");
    run_train(d, &b, &["--epochs", "3", "--workers", "2"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let z = d.join("z.ck");
    run_train(d, &z, &["--epochs", "0", "--seed", "11", "--hidden", "5", "--layers", "2"]);
    let ck = Checkpoint::load(&z).unwrap();
    let dim = EmbeddingStore::load(&d.join("embeddings.txt")).unwrap().dim();
    let shape = ModelShape::uniform(ck.frame.feature_width(dim), 5, 2).unwrap();
    assert_eq!(ck.params, ModelParams::init(&shape, 11).unwrap());
    assert_eq!(ck.seed, 11);
}

#[test]
fn finetuning_writes_the_tuned_embeddings() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    synth(d, "30");
    let ck = d.join("f.ck");
    run_train(d, &ck, &["--epochs", "1", "--finetune", "--hidden", "8"]);
    let tuned = EmbeddingStore::load(&d.join("f.ck.emb")).unwrap();
    let base = EmbeddingStore::load(&d.join("embeddings.txt")).unwrap();
    assert_eq!(tuned.entity_count(), base.entity_count());
    assert_ne!(tuned, base);
}

// ------------------------------------------------------------------- link

const EMB: &str = ncel::fixtures::EMBEDDINGS;

#[test]
fn single_candidates_get_probability_one_and_unknown_surfaces_a_dash() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write(d, "embeddings.txt", EMB);
    write(
        d,
        "dictionary.txt",
        "m Hussain Nasser_Hussain 0.7\nm England England_cricket_team 0.4\nm Essex Essex_County_Cricket_Club 0.5\n",
    );
    write(
        d,
        "train.txt",
        "doc a\ntext Hussain struck a century for England at Nobody\nmention 0 1 Nasser_Hussain\nmention 5 6 England_cricket_team\nmention 7 8 -\n",
    );
    let ck = d.join("m.ck");
    run_train(d, &ck, &["--epochs", "0", "--n", "3", "--q", "1", "--hidden", "4"]);
    let tsv = ok(&[
        "link",
        "--embeddings",
        s(&d.join("embeddings.txt")),
        "--dictionary",
        s(&d.join("dictionary.txt")),
        "--corpus",
        s(&d.join("train.txt")),
        "--checkpoint",
        s(&ck),
    ]);
    assert!(tsv.contains("# model.n=3\n"));
    assert_eq!(
        body(&tsv),
        vec![
            "a\t0\tHussain\tNasser_Hussain\t1.000000",
            "a\t1\tEngland\tEngland_cricket_team\t1.000000",
            "a\t2\tNobody\t-\t0",
        ]
    );
}

/// Test mention whose gold trails another entity on its surface.
fn distracted_mention(dict: &MentionDictionary, corpus: &Path) -> (Vec<String>, usize, String, String) {
    for doc in load_corpus(corpus).unwrap() {
        for (i, m) in doc.mentions.iter().enumerate() {
            let cands = dict.get(&m.surface);
            let gold = m.gold.clone().unwrap();
            if cands.len() >= 2 && cands[0].entity != gold && cands[1].entity == gold {
                let surfaces = doc.mentions.iter().map(|m| m.surface.clone()).collect();
                return (surfaces, i, gold, cands[0].entity.clone());
            }
        }
    }
    panic!("no distracted mention in the test corpus");
}

#[test]
fn coherent_neighbors_raise_the_tied_entity_above_the_local_model() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    synth(d, "150");
    let dict = MentionDictionary::load(&d.join("dictionary.txt")).unwrap();
    let (surfaces, i, gold, rival) = distracted_mention(&dict, &d.join("test.txt"));

    // equal priors for gold and rival; the document holds only mention surfaces
    let tied: String = dict
        .to_text()
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            let surface = f[1..f.len() - 2].join(" ");
            let entity = f[f.len() - 2];
            if surface == surfaces[i] && (entity == gold || entity == rival) {
                format!("m {surface} {entity} 0.45\n")
            } else {
                format!("{l}\n")
            }
        })
        .collect();
    let tied_dict = write(d, "tied.txt", &tied);
    let mut tokens = Vec::new();
    let mut spans = String::new();
    for (k, surf) in surfaces.iter().enumerate() {
        let start = tokens.len();
        tokens.extend(surf.split_whitespace());
        spans.push_str(&format!("mention {start} {} {}\n", tokens.len(), if k == i { gold.as_str() } else { "-" }));
    }
    let doc = write(d, "tie.txt", &format!("doc tie\ntext {}\n{spans}", tokens.join(" ")));

    let prob = |extra: &[&str], name: &str| -> (String, f64) {
        let ck = d.join(name);
        run_train(d, &ck, &[&["--epochs", "3", "--hidden", "16"], extra].concat());
        let tsv = ok(&[
            "link",
            "--embeddings",
            s(&d.join("embeddings.txt")),
            "--dictionary",
            s(&tied_dict),
            "--corpus",
            s(&doc),
            "--checkpoint",
            s(&ck),
        ]);
        let row: Vec<String> = body(&tsv)[i].split('\t').map(String::from).collect();
        (row[3].clone(), row[4].parse().unwrap())
    };
    let (full_entity, full_p) = prob(&[], "full.ck");
    let (local_entity, local_p) = prob(&["--local"], "local.ck");
    assert_eq!(full_entity, gold);
    // probability of gold under the local model
    let local_gold = if local_entity == gold { local_p } else { 1.0 - local_p };
    assert!(full_p > local_gold, "full {full_p} vs local {local_gold} ({local_entity})");
}

// ------------------------------------------------------------------- eval

#[test]
fn eval_reproduces_the_hand_computed_fixture() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let gold = write(
        d,
        "gold.txt",
        "doc a\ntext a0 a1 a2\nmention 0 1 A1\nmention 1 2 A2\nmention 2 3 A3\n\
         doc b\ntext b0 b1 b2\nmention 0 1 B1\nmention 1 2 -\nmention 2 3 B2\n\
         doc c\ntext c0\nmention 0 1 C1\n",
    );
    let preds = write(
        d,
        "p.tsv",
        "# made by hand\na\t0\ta0\tA1\t0.9\na\t1\ta1\tZ\t0.8\na\t2\ta2\t-\t0\n\
         b\t0\tb0\tB1\t1\nb\t1\tb1\tQ\t1\nb\t2\tb2\tB2\t1\nc\t0\tc0\tZ\t0.5\n",
    );
    let csv = d.join("e.csv");
    let table = ok(&["eval", "--predictions", s(&preds), "--gold", s(&gold), "--csv", s(&csv)]);
    assert!(table.contains("micro"), "{table}");
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows = body(&text);
    assert_eq!(rows[1], "micro,-,0.600000,0.500000,0.545455,6,5,3,1");
    assert_eq!(rows[2], "macro,-,0.500000,0.444444,0.466667,,,,");
    assert_eq!(rows.len(), 3 + 3);

    let broken = write(d, "broken.tsv", "a\tx\ta0\tA1\t0.9\n");
    assert_eq!(code(&["eval", "--predictions", s(&broken), "--gold", s(&gold)]), 3);
    let nogold = write(d, "nogold.txt", "doc a\ntext a0\nmention 0 1 -\n");
    assert_eq!(code(&["eval", "--predictions", s(&preds), "--gold", s(&nogold)]), 3);
}

#[test]
fn prior_only_link_needs_no_model() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let dict = write(d, "dict.txt", ncel::fixtures::DICTIONARY);
    let corpus = write(d, "c.txt", ncel::fixtures::CORPUS);
    let tsv = ok(&["link", "--prior-only", "--dictionary", s(&dict), "--corpus", s(&corpus)]);
    assert!(tsv.contains("# prior_only=true\n"));
    assert_eq!(body(&tsv)[1], "cricket\t1\tEngland\tEngland\t0.600000");
}

// ------------------------------------------------------------ bench, grads

#[test]
fn bench_writes_rows_and_slopes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("b.csv");
    ok(&["bench", "--ks", "8,16", "--trials", "3", "--set", "bench_hidden=4", "-o", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("# bench_hidden=4\n") && text.contains("# subgcn_slope="));
    let rows = body(&text);
    assert_eq!(rows[0], "k,subgcn_ms,fullgraph_ms");
    assert_eq!(rows.len(), 3);
    assert_eq!(code(&["bench", "--ks", "8,16", "--trials", "2"]), 2);
}

#[test]
fn gradient_check_passes_on_the_fixture() {
    let out = ok(&["check-grad"]);
    let err: f64 = out.split_whitespace().nth(4).unwrap().parse().unwrap();
    assert!(err < 1e-4, "{out}");
}

// ---------------------------------------------------- config and exit codes

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write(d, "embeddings.txt", EMB);
    write(d, "dictionary.txt", ncel::fixtures::DICTIONARY);
    write(d, "train.txt", ncel::fixtures::CORPUS);
    let cfg = write(d, "run.cfg", "# run\nepochs = 0\nseed = 3\nhidden = 6\nmomentum = 0.5\n");
    let ck = d.join("m.ck");
    run_train(d, &ck, &["--config", s(&cfg), "--seed", "5", "--set", "momentum=0.25"]);
    let csv = std::fs::read_to_string(d.join("m.ck.loss.csv")).unwrap();
    for line in ["# seed=5", "# epochs=0", "# hidden=6", "# momentum=0.25"] {
        assert!(csv.lines().any(|l| l == line), "{line} missing from\n{csv}");
    }
    assert_eq!(Checkpoint::load(&ck).unwrap().seed, 5);

    let bad = write(d, "bad.cfg", "epochs = 0\nwhat = 1\n");
    let out = ncel(&["check-grad", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.cfg:2"));
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(code(&["train", "--epochs", "many"]), 2);
    assert_eq!(code(&["train", "--n", "0"]), 2);
    assert_eq!(code(&["check-grad", "--set", "seed"]), 2);
    // missing required input is a config problem, a missing file is a data one
    assert_eq!(code(&["link", "--prior-only", "--corpus", "x"]), 2);
    assert_eq!(code(&["link", "--prior-only", "--dictionary", "/no/such/file", "--corpus", "x"]), 3);

    write(d, "embeddings.txt", EMB);
    write(d, "dictionary.txt", ncel::fixtures::DICTIONARY);
    write(d, "train.txt", ncel::fixtures::CORPUS);
    let junk = write(d, "junk.ck", "not a checkpoint");
    let link_junk = ncel(&[
        "link",
        "--embeddings",
        s(&d.join("embeddings.txt")),
        "--dictionary",
        s(&d.join("dictionary.txt")),
        "--corpus",
        s(&d.join("train.txt")),
        "--checkpoint",
        s(&junk),
    ]);
    assert_eq!(link_junk.status.code(), Some(3));

    let e = d.join("embeddings.txt");
    let dd = d.join("dictionary.txt");
    let c = d.join("train.txt");
    let ck = d.join("nan.ck");
    let blowup = ncel(&[
        "train",
        "--embeddings",
        s(&e),
        "--dictionary",
        s(&dd),
        "--corpus",
        s(&c),
        "--checkpoint",
        s(&ck),
        "--learning-rate",
        "1e300",
        "--dev-fraction",
        "0",
        "--epochs",
        "3",
    ]);
    assert_eq!(blowup.status.code(), Some(4), "{}", String::from_utf8_lossy(&blowup.stderr));
}
