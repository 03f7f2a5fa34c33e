use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use kvmem_cli::checkpoint::Checkpoint;
use kvmem_cli::io::{read_alignments, AttentionDump};
use kvmem_cli::{run, CliError};
use kvmem_core::data::Side;
use kvmem_core::decode::greedy_decode;
use tempfile::TempDir;

struct Outcome {
    result: Result<(), CliError>,
    out: String,
    err: String,
}

fn kvmem(args: &[&str]) -> Outcome {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["kvmem"];
    full.extend_from_slice(args);
    let result = run(full, &mut out, &mut err);
    Outcome {
        result,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn ok(args: &[&str]) -> Outcome {
    let o = kvmem(args);
    if let Err(e) = &o.result {
        panic!("{args:?} failed: {e}\n{}", o.err);
    }
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().map(str::to_string).collect()
}

/// Lexical data plus a config for a small, fast model.
fn workspace() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    ok(&[
        "gen-data", "--task", "lexical", "--invert", "--vocab-size", "8", "--min-len", "2", "--max-len", "5",
        "--count", "120", "--valid", "10", "--test", "10", "--seed", "4", "--out", s(&data),
    ]);
    let config = dir.path().join("run.toml");
    let text = format!(
        "model.variant = \"baseline\"\nmodel.embed_dim = 8\nmodel.hidden_dim = 8\nmodel.dropout = 0.0\n\
         train.epochs = 2\ntrain.batch_size = 16\n\
         paths.train_src = \"{0}/train.src\"\npaths.train_trg = \"{0}/train.trg\"\n\
         paths.valid_src = \"{0}/valid.src\"\npaths.valid_trg = \"{0}/valid.trg\"\n\
         paths.output = \"{1}\"\n",
        data.display(),
        dir.path().join("base").display()
    );
    fs::write(&config, text).unwrap();
    (dir, config)
}

fn loss_columns(log: &Path) -> Vec<String> {
    lines(log)
        .iter()
        .map(|l| l.split('\t').take(4).collect::<Vec<_>>().join("\t"))
        .collect()
}

#[test]
fn copy_data_is_line_wise_equal_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["gen-data", "--task", "copy", "--count", "1000", "--seed", "9", "--out", s(out)]);
    }
    let (src, trg) = (lines(&a.join("train.src")), lines(&a.join("train.trg")));
    assert_eq!(src.len(), 1000);
    assert_eq!(src, trg);
    for f in ["train.src", "train.trg", "train.align", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
}

#[test]
fn inverted_lexical_alignments_are_reversals() {
    let dir = TempDir::new().unwrap();
    ok(&["gen-data", "--task", "lexical", "--invert", "--count", "50", "--out", s(dir.path())]);
    let src = lines(&dir.path().join("train.src"));
    let links = read_alignments(&dir.path().join("train.align")).unwrap();
    for (sent, l) in src.iter().zip(&links) {
        let n = sent.split_whitespace().count();
        let want: Vec<(usize, usize)> = (0..n).map(|t| (n - 1 - t, t)).collect();
        let mut got: Vec<(usize, usize)> = l.iter().copied().collect();
        got.sort_by_key(|&(_, t)| t);
        assert_eq!(got, want);
    }
    let e = kvmem(&["gen-data", "--task", "copy", "--invert", "--out", s(dir.path())]);
    assert_eq!(e.result.unwrap_err().exit_code(), 1);
}

#[test]
fn seeded_training_is_reproducible() {
    let (dir, config) = workspace();
    let o1 = ok(&["train", "--config", s(&config), "--seed", "5"]);
    let first = loss_columns(&dir.path().join("base/train.log"));
    ok(&["train", "--config", s(&config), "--train.seed", "5"]);
    assert_eq!(loss_columns(&dir.path().join("base/train.log")), first);
    assert_eq!(first.len(), 2);
    // Epoch, train loss, valid loss, valid BLEU, seconds.
    assert_eq!(lines(&dir.path().join("base/train.log"))[0].split('\t').count(), 5);
    assert_eq!(o1.out.lines().count(), 2);
    assert!(o1.err.starts_with("manifest {"), "{}", o1.err);
    ok(&["train", "--config", s(&config), "--seed", "6"]);
    assert_ne!(loss_columns(&dir.path().join("base/train.log"))[0], first[0]);
}

#[test]
fn zero_lambda_still_reports_the_penalty() {
    let (_dir, config) = workspace();
    let o = ok(&["train", "--config", s(&config), "--variant", "kvmematt", "--lambda", "0"]);
    let line = o.err.lines().find(|l| l.starts_with("epoch 1 ")).unwrap();
    assert!(line.contains("lambda 0"), "{line}");
    let penalty: f64 = line.split_whitespace().skip_while(|w| *w != "penalty").nth(1).unwrap().parse().unwrap();
    assert!(penalty > 0.0);
}

#[test]
fn two_stage_recipe_and_translation() {
    let (dir, config) = workspace();
    ok(&["train", "--config", s(&config)]);
    let base = dir.path().join("base/model.ckpt");
    let kv = dir.path().join("kv");
    let o = ok(&[
        "train", "--config", s(&config), "--variant", "kvmematt", "--rounds", "2", "--init-from", s(&base),
        "--output", s(&kv),
    ]);
    assert!(o.err.contains("initialized"), "{}", o.err);
    let ck = Checkpoint::load(&kv.join("model.ckpt")).unwrap();
    let pretrained = Checkpoint::load(&base).unwrap();
    assert_eq!(ck.src_vocab, pretrained.src_vocab);

    let data = dir.path().join("data");
    let input = data.join("test.src");
    let out1 = dir.path().join("beam1.txt");
    let dump = dir.path().join("dump.json");
    ok(&[
        "dump-attention", "--checkpoint", s(&kv.join("model.ckpt")), "--input", s(&input), "--beam", "1",
        "--output", s(&out1), "--dump-attention", s(&dump),
    ]);
    let src_lines = lines(&input);
    let hyps = lines(&out1);
    assert_eq!(hyps.len(), src_lines.len());
    for (src, hyp) in src_lines.iter().zip(&hyps) {
        let tokens: Vec<&str> = src.split_whitespace().collect();
        let ids = ck.src_vocab.encode(&tokens, Side::Source);
        let greedy = greedy_decode(&ck.model, &ids, ck.model.config().max_decode_len).unwrap();
        assert_eq!(ck.trg_vocab.decode(&greedy.tokens).join(" "), *hyp);
    }
    let dump = AttentionDump::read(&dump).unwrap();
    assert_eq!(dump.sentences.len(), src_lines.len());
    for entry in &dump.sentences {
        assert_eq!(entry.rounds.len(), 2);
        for m in &entry.rounds {
            for row in m {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert!(row.iter().all(|&a| a >= 0.0));
            }
        }
        entry.to_trace().unwrap();
    }
    let cov = ok(&["eval", "coverage", "--dump", s(&dir.path().join("dump.json"))]);
    assert!(cov.out.contains("under\t") && cov.out.contains("over\t"), "{}", cov.out);

    // Forced decoding of the references yields one alignment line each.
    let align = dir.path().join("hyp.align");
    ok(&[
        "translate", "--checkpoint", s(&kv.join("model.ckpt")), "--input", s(&input), "--reference",
        s(&data.join("test.trg")), "--alignments", s(&align), "--output", s(&dir.path().join("forced.txt")),
    ]);
    assert_eq!(read_alignments(&align).unwrap().len(), src_lines.len());
    let aer = ok(&["eval", "aer", "--hyp", s(&align), "--gold", s(&data.join("test.align"))]);
    let value: f64 = aer.out.trim().strip_prefix("aer\t").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&value));
}

#[test]
fn bad_lines_are_skipped_with_a_marker() {
    let (dir, config) = workspace();
    ok(&["train", "--config", s(&config), "--epochs", "1"]);
    let input = dir.path().join("in.txt");
    fs::write(&input, b"s1 s2\n\xff\xfe\ns3 nonsense\n\n").unwrap();
    let o = ok(&[
        "translate", "--checkpoint", s(&dir.path().join("base/model.ckpt")), "--input", s(&input),
        "--reject-unknown",
    ]);
    let out: Vec<&str> = o.out.lines().collect();
    assert_eq!(out.len(), 4);
    assert_eq!(out[1], "<skipped>");
    assert_eq!(out[2], "<skipped>");
    assert!(o.err.contains("line 2:") && o.err.contains("line 3:"), "{}", o.err);
}

#[test]
fn metric_lines() {
    let dir = TempDir::new().unwrap();
    ok(&["gen-data", "--task", "lexical", "--count", "30", "--out", s(dir.path())]);
    let trg = dir.path().join("train.trg");
    let align = dir.path().join("train.align");
    assert_eq!(ok(&["eval", "bleu", "--hyp", s(&trg), "--ref", s(&trg)]).out, "bleu\t100.00\n");
    assert_eq!(ok(&["eval", "aer", "--hyp", s(&align), "--gold", s(&align)]).out, "aer\t0.0000\n");
    let short = dir.path().join("short.trg");
    fs::write(&short, "t1\n").unwrap();
    let e = kvmem(&["eval", "bleu", "--hyp", s(&short), "--ref", s(&trg)]);
    assert_eq!(e.result.unwrap_err().exit_code(), 2);
}

#[test]
fn config_errors_exit_with_one() {
    let (dir, config) = workspace();
    let e = kvmem(&["train", "--config", s(&config), "--model.dropout", "1.5"]);
    assert_eq!(e.result.unwrap_err().exit_code(), 1);
    let partial = dir.path().join("partial.toml");
    fs::write(&partial, "model.rounds = 2\nmodel.colour = \"red\"\n").unwrap();
    let err = kvmem(&["train", "--config", s(&partial)]).result.unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("model.colour"), "{err}");
    fs::write(&partial, "model.rounds = 2\n").unwrap();
    let err = kvmem(&["train", "--config", s(&partial)]).result.unwrap_err().to_string();
    assert!(err.contains("model.variant") && err.contains("paths.output"), "{err}");
    let missing = kvmem(&["train", "--config", s(&dir.path().join("nope.toml"))]);
    assert_eq!(missing.result.unwrap_err().exit_code(), 1);
}

#[test]
fn mismatched_init_checkpoint_is_a_data_error() {
    let (dir, config) = workspace();
    ok(&["train", "--config", s(&config), "--epochs", "1"]);
    let e = kvmem(&[
        "train", "--config", s(&config), "--model.embed_dim", "6", "--init-from",
        s(&dir.path().join("base/model.ckpt")), "--output", s(&dir.path().join("x")),
    ]);
    let err = e.result.unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn grad_check_reports_every_parameter_group() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("g.toml");
    fs::write(&config, "model.dropout = 0.5\nmodel.gate_bias = true\n").unwrap();
    let o = ok(&["grad-check", "--config", s(&config), "--rounds", "2"]);
    let variants: Vec<&str> = o.out.lines().filter(|l| !l.starts_with(' ')).collect();
    assert_eq!(variants.len(), 3);
    assert!(variants.iter().all(|l| l.ends_with("PASS")), "{}", o.out);
    assert!(o.out.contains("  att.r2.forget\t"));
    assert!(o.out.contains("  att.r1.forget_bias\t"), "{}", o.out);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_kvmem");
    let code = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(code(&["grad-check", "--rounds", "1"]), Some(0));
    assert_eq!(code(&["grad-check", "--rounds", "1", "--eps", "0.5"]), Some(3));
    assert_eq!(code(&["translate"]), Some(1));
    assert_eq!(code(&["eval", "aer", "--hyp", "/nonexistent", "--gold", "/nonexistent"]), Some(2));
    assert_eq!(code(&["--help"]), Some(0));
}
