//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
//! if any fails.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use polagree::attributes::{Attribute, AttributeSet, AttributeType};
use polagree::conditioning::{condition, ConditioningMode, Phase, TypeEmbeddingTable};
use polagree::corpus::{balanced_split, AnnotatedPair, Split};
use polagree::detector::{builtin_fixture, score_fixture, Detector};
use polagree::metrics::{agree_counts, bleu, bootstrap_equivalence, chrf, reverse_set, TypedHypothesis};
use polagree::morpho::Lexicon;
use polagree::synth::{Grammar, GroupWeights};
use polagree_nmt::bpe::reserved_tag_vocab;
use polagree_nmt::evaluate::{ambid_batched, evaluate, ModeEvaluation};
use polagree_nmt::gradcheck::check_all_modes;
use polagree_nmt::{finetune, pretrain, Checkpoint, ModelConfig, TrainConfig, Translator};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn table3() -> Check {
    let lex = Lexicon::builtin();
    let det = Detector::new(&lex);
    let rows = include_str!("../../core/data/table3.tsv");
    let start = Instant::now();
    let mut bad = Vec::new();
    let mut n = 0;
    for line in rows.lines() {
        let f: Vec<&str> = line.split('\t').collect();
        let d = det.detect(f[0], f[1]);
        n += 1;
        for (k, a) in Attribute::ALL.iter().enumerate() {
            let got = d.attrs.get(*a).map(|t| t.tag().trim_matches(['<', '>']).to_string());
            let ok = match f[2 + k] {
                "*" => true,
                "x" => got.is_none(),
                want => got.as_deref() == Some(want) && d.evidence.iter().any(|e| e.attr.attribute() == *a && e.end > e.start),
            };
            if !ok {
                bad.push(format!("{} {a:?}={got:?}", f[1]));
            }
        }
    }
    let t = start.elapsed();
    ensure(n == 14 && bad.is_empty() && t < Duration::from_secs(1), format!("{n} rows, {} mismatches {bad:?}, {t:?}", bad.len()))
}

fn detector_fixture() -> Check {
    let fixture = builtin_fixture();
    let r = score_fixture(&fixture, &Lexicon::builtin());
    let worst_p = r.per_attribute.iter().map(|s| s.precision).fold(1.0, f64::min);
    let worst_r = r.per_attribute.iter().map(|s| s.recall).fold(1.0, f64::min);
    ensure(
        fixture.len() == 200 && worst_p >= 0.95 && worst_r >= 0.95,
        format!("{} pairs, min precision {worst_p:.4}, min recall {worst_r:.4}", fixture.len()),
    )
}

fn metric_oracles() -> Check {
    let tsv = include_str!("../../core/data/metric_fixture.tsv");
    let frozen: serde_json::Value = serde_json::from_str(include_str!("../../core/data/metric_fixture_scores.json")).unwrap();
    let (hyps, refs): (Vec<&str>, Vec<&str>) = tsv.lines().map(|l| l.split_once('\t').unwrap()).unzip();
    let c = chrf(&hyps, &refs).unwrap();
    let b = bleu(&hyps, &refs).unwrap();
    let dc = (c - frozen["chrf"].as_f64().unwrap()).abs();
    let db = (b - frozen["bleu"].as_f64().unwrap()).abs();
    let identity = chrf(&refs, &refs).unwrap() == 100.0 && bleu(&refs, &refs).unwrap() == 100.0;
    ensure(
        hyps.len() == 50 && dc <= 0.1 && db <= 0.1 && identity,
        format!("chrF {c:.3} (off {dc:.4}), BLEU {b:.3} (off {db:.4}), identity 100: {identity}"),
    )
}

fn formula_units() -> Check {
    let lex = Lexicon::builtin();
    let det = Detector::new(&lex);
    let h = |hyp: &str, src: &str| TypedHypothesis {
        hypothesis: hyp.to_string(),
        requested: AttributeType::SpFeminine,
        source: src.to_string(),
    };
    let mut hyps = vec![h("Jestem amatorką.", "I'm an amateur."); 3];
    hyps.push(h("Jestem całkiem sam.", "I'm all alone."));
    hyps.extend(vec![h("Proszę kontynuować.", "Go ahead."); 6]);
    let counts = agree_counts(&hyps, &det);
    let score = counts.score();
    use AttributeType::*;
    let expected = [
        (SpFeminine, SpMasculine),
        (SpMasculine, SpFeminine),
        (IlMasculine, IlFeminine),
        (IlMixed, IlFeminine),
        (IlFeminine, IlMasculine),
        (Singular, Plural),
        (Plural, Singular),
        (Informal, Formal),
        (Formal, Informal),
    ];
    let map_ok = expected.iter().all(|(t, r)| t.reverse() == *r);
    let sets_ok = AttributeSet::all_legal().iter().all(|a| {
        let r = reverse_set(a);
        a.types().len() == r.types().len() && a.types().iter().all(|t| r.contains(t.reverse()))
    });
    let asymmetric = IlMixed.reverse().reverse() != IlMixed;
    ensure(
        score == Some(75.0) && (counts.agrees, counts.contradicts, counts.unmarked) == (3, 1, 6) && map_ok && sets_ok && asymmetric,
        format!("Agree {score:?} from {counts:?}; reverse map {map_ok}, sets {sets_ok}, asymmetric {asymmetric}"),
    )
}

/// Total extra input positions per mode for `n` present types.
fn table4(mode: ConditioningMode, n: usize) -> usize {
    use ConditioningMode::*;
    match mode {
        Baseline | EmbPWSum | EmbAdd | EmbSOS | OutBias => 0,
        TagEnc => n,
        TagDec => n + 1,
        TagEncDec => 2 * n + 1,
        EmbEnc | EmbEncSOS => 1,
    }
}

fn conditioning_shapes() -> Check {
    let table = TypeEmbeddingTable::<f32>::random(8, 30, 1.0, &mut ChaCha8Rng::seed_from_u64(7));
    let tags = reserved_tag_vocab();
    let src = [20u32, 21, 22, 23];
    let sets: Vec<AttributeSet> = AttributeSet::all_legal();
    let mut bad = Vec::new();
    let mut checked = 0;
    for mode in ConditioningMode::ALL {
        for set in &sets {
            if set.is_empty() && mode != ConditioningMode::Baseline {
                continue;
            }
            for phase in [Phase::Train, Phase::Infer] {
                let c = condition(mode, set, &src, &table, &tags, phase, 5);
                let used = c.encoder_len() - src.len() + c.decoder_forced_prefix.len();
                checked += 1;
                if used != table4(mode, set.len()) {
                    bad.push(format!("{mode:?} {set}: {used}"));
                }
            }
            if mode.uses_table() {
                let mut types = set.types();
                types.reverse();
                types.shuffle(&mut ChaCha8Rng::seed_from_u64(set.len() as u64));
                let perm = AttributeSet::from_types(types).unwrap();
                let a = condition(mode, set, &src, &table, &tags, Phase::Train, 1);
                let b = condition(mode, &perm, &src, &table, &tags, Phase::Train, 99);
                let bits = |c: &polagree::ConditionedInput<f32>| -> Vec<u32> {
                    c.encoder_prepend_vectors
                        .iter()
                        .flatten()
                        .chain(c.encoder_additive.iter().flat_map(|v| v.0.iter()))
                        .chain(c.decoder_sos_vector.iter().flatten())
                        .chain(c.output_bias.iter().flatten())
                        .map(|x| x.to_bits())
                        .collect()
                };
                if bits(&a) != bits(&b) {
                    bad.push(format!("{mode:?} {set}: order-dependent"));
                }
            }
        }
    }
    ensure(bad.is_empty(), format!("{checked} mode/set/phase cases, {} mismatches {bad:?}", bad.len()))
}

fn gradient_check() -> Check {
    let reports = check_all_modes(1e-4, 11);
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let dead: Vec<String> = reports.iter().filter(|r| !r.dead_types.is_empty()).map(|r| r.mode.clone()).collect();
    ensure(
        reports.len() == 10 && worst < 1e-3 && dead.is_empty(),
        format!("max relative error {worst:.3e} over 10 modes, modes with dead types {dead:?}"),
    )
}

struct Trained {
    split: Split,
    ambivalent: Vec<String>,
    evals: BTreeMap<String, (ModeEvaluation, Duration)>,
    checkpoints: BTreeMap<String, Checkpoint>,
}

/// Share of the corpus drawn from the unmarked templates.
const UNANNOTATED: f64 = 0.25;

const END_TO_END: [ConditioningMode; 7] = [
    ConditioningMode::Baseline,
    ConditioningMode::TagEnc,
    ConditioningMode::TagDec,
    ConditioningMode::TagEncDec,
    ConditioningMode::EmbEnc,
    ConditioningMode::EmbSOS,
    ConditioningMode::EmbEncSOS,
];

fn train_all() -> Trained {
    let lex = Lexicon::builtin();
    let det = Detector::new(&lex);
    let grammar = Grammar::builtin(&det).unwrap();
    let corpus = grammar.generate_corpus(20_000, UNANNOTATED, &GroupWeights::Uniform, 1).unwrap();
    let split = balanced_split(&corpus, 20, 1).unwrap();
    let seen: HashSet<&str> = corpus.iter().map(|p| p.src.as_str()).collect();
    let mut fresh = HashSet::new();
    let ambivalent: Vec<String> = grammar
        .generate_ambivalent(5000, 101)
        .into_iter()
        .filter(|s| !seen.contains(s.as_str()) && fresh.insert(s.clone()))
        .take(1000)
        .collect();
    let plain = |p: &[AnnotatedPair]| -> Vec<(String, String)> { p.iter().map(|p| (p.src.clone(), p.tgt.clone())).collect() };
    let start = Instant::now();
    let base = pretrain(&ModelConfig::default(), &TrainConfig::default(), &plain(&split.remainder), &plain(&split.dev)).unwrap();
    eprintln!(
        "pretrained {} params in {:.0}s, best dev chrF {:.2}",
        base.model.params.count(),
        start.elapsed().as_secs_f64(),
        base.best_dev_chrf().unwrap()
    );
    let mut evals = BTreeMap::new();
    let mut checkpoints = BTreeMap::new();
    for mode in END_TO_END {
        let start = Instant::now();
        let ft = finetune(&base, mode, &TrainConfig::default(), &split.remainder, &split.dev, &det).unwrap();
        let took = start.elapsed();
        let tr = Translator::new(&ft.model, &ft.bpe, mode);
        let amb: &[String] = if matches!(mode, ConditioningMode::TagEnc | ConditioningMode::Baseline) { &ambivalent } else { &[] };
        let e = evaluate(&tr, &split.test, amb, &det, 5).unwrap();
        eprintln!(
            "{:<10} fine-tune {:.0}s; complete chrF {:.2} Agree {:?}; isolated chrF {:.2} Agree {:?}; AmbID {:?}",
            mode.name(),
            took.as_secs_f64(),
            e.complete.report.chrf,
            e.complete.report.agree,
            e.isolated.report.chrf,
            e.isolated.report.agree,
            e.complete.report.ambid
        );
        evals.insert(mode.name().to_string(), (e, took));
        checkpoints.insert(mode.name().to_string(), ft);
    }
    Trained {
        split,
        ambivalent,
        evals,
        checkpoints,
    }
}

fn end_to_end_control(t: &Trained) -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for (mode, (e, took)) in &t.evals {
        let a = e.complete.report.agree.unwrap_or(0.0);
        let pass = if mode == "Baseline" { a <= 75.0 } else { a >= 95.0 };
        let fast = *took <= Duration::from_secs(30 * 60);
        ok &= pass && fast;
        lines.push(format!("{mode} {a:.2} ({:.0}s)", took.as_secs_f64()));
    }
    ensure(ok && t.evals.len() == 7, format!("test {} pairs; complete-context Agree: {}", t.split.test.len(), lines.join(", ")))
}

fn restricted_impact(t: &Trained) -> Check {
    let tag = t.evals["TagEnc"].0.complete.report.ambid.unwrap_or(0.0);
    let base = t.evals["Baseline"].0.complete.report.ambid.unwrap_or(0.0);
    let ckpt = &t.checkpoints["Baseline"];
    let again = ambid_batched(&Translator::new(&ckpt.model, &ckpt.bpe, ckpt.mode), &t.ambivalent[..100], 5).unwrap();
    ensure(
        t.ambivalent.len() == 1000 && tag >= 90.0 && base == 100.0 && again == 100.0,
        format!("AmbID on {} sources: TagEnc {tag:.2}, Baseline {base:.2}", t.ambivalent.len()),
    )
}

fn quality_ordering(t: &Trained) -> Check {
    let tag = &t.evals["TagEnc"].0;
    let base = &t.evals["Baseline"].0;
    let (cc, iso) = (tag.complete.report.chrf, tag.isolated.report.chrf);
    let (base_cc, base_iso) = (base.complete.report.chrf, base.isolated.report.chrf);
    let systems: BTreeMap<String, Vec<String>> = [
        ("TagEnc".to_string(), tag.complete.hypotheses.clone()),
        ("Baseline".to_string(), base.complete.hypotheses.clone()),
    ]
    .into_iter()
    .collect();
    let boot = bootstrap_equivalence(&systems, &tag.complete.references, 2000, 0.05, 1).unwrap();
    let untied = boot.best == "TagEnc" && !boot.tied.iter().any(|s| s == "Baseline");
    ensure(
        cc >= iso && iso >= base_iso && iso >= base_cc && untied,
        format!(
            "TagEnc complete {cc:.2} >= isolated {iso:.2} >= Baseline {base_cc:.2} (isolated cases {base_iso:.2}); Baseline win rate {:.4}, tied {:?}",
            boot.win_rate["Baseline"], boot.tied
        ),
    )
}

fn cli(args: &[&str], dir: &Path) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_polagree"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

const TOY: &str = r#"{
  "model": {"layers": 1, "d_model": 16, "heads": 2, "ff_dim": 32, "vocab_size": 200, "max_len": 32, "dropout": 0.1, "seed": 4},
  "pretrain": {"epochs": 1, "batch_size": 32, "max_steps": 8, "dev_limit": 10},
  "finetune": {"epochs": 1, "batch_size": 32, "max_steps": 6, "dev_limit": 10},
  "train": "train.jsonl", "dev": "dev.jsonl", "test": "test.jsonl", "ambivalent": "amb.txt",
  "checkpoints": "ckpt", "reports": "reports", "modes": ["Baseline", "TagEnc", "EmbSOS"],
  "beam": 3, "bootstrap_samples": 100
}"#;

/// Runs every subcommand in `dir` and returns its artifacts and outputs.
fn pipeline(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::create_dir_all(dir.join("ckpt")).unwrap();
    std::fs::create_dir_all(dir.join("reports")).unwrap();
    std::fs::create_dir_all(dir.join("stop")).unwrap();
    std::fs::write(dir.join("run.json"), TOY).unwrap();
    std::fs::write(dir.join("s.txt"), "I'm an amateur.\nYou are wrong.\nGo ahead.\n").unwrap();
    std::fs::write(dir.join("t.txt"), "Jestem amatorką.\nMylą się państwo.\nProszę kontynuować.\n").unwrap();
    std::fs::write(dir.join("in.txt"), "sp:feminine\tI was tired.\nil:mixed,plural,formal\tYou are wrong.\n").unwrap();
    let mut out = BTreeMap::new();
    let steps: Vec<Vec<&str>> = vec![
        vec!["detect", "--src", "s.txt", "--tgt", "t.txt"],
        vec!["annotate", "--src", "s.txt", "--tgt", "t.txt", "--out", "ann.jsonl", "--counts", "counts.tsv"],
        vec!["stopwords", "--src", "s.txt", "--tgt", "t.txt", "--out", "stop"],
        vec!["synth", "--n", "700", "--unannotated", "0.1", "--out", "corpus.jsonl", "--ambivalent", "20", "--ambivalent-out", "amb.txt"],
        vec!["split", "--corpus", "corpus.jsonl", "--per-group", "2", "--out", "."],
        vec!["pretrain", "--out", "ckpt/base.ckpt"],
        vec!["finetune", "--base", "ckpt/base.ckpt", "--mode", "Baseline", "--out", "ckpt/Baseline.ckpt"],
        vec!["finetune", "--base", "ckpt/base.ckpt", "--mode", "TagEnc", "--seed", "1", "--out", "ckpt/TagEnc.ckpt"],
        vec!["finetune", "--base", "ckpt/base.ckpt", "--mode", "EmbSOS", "--out", "ckpt/EmbSOS.ckpt"],
        vec!["translate", "--checkpoint", "ckpt/TagEnc.ckpt", "--input", "in.txt"],
        vec!["evaluate"],
        vec!["ambid", "--checkpoint", "ckpt/TagEnc.ckpt"],
        vec!["gradcheck", "--seed", "2"],
    ];
    for s in steps {
        let mut args = vec!["--config", "run.json"];
        args.extend(&s);
        out.insert(format!("stdout of {}", s.join(" ")), cli(&args, dir));
    }
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Check {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline(a.path());
    let rb = pipeline(b.path());
    let differing: Vec<&String> = ra.keys().filter(|k| ra.get(*k) != rb.get(*k)).collect();
    ensure(
        ra.len() == rb.len() && differing.is_empty(),
        format!("{} artifacts and outputs compared across two runs, differing {differing:?}", ra.len()),
    )
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let secs = start.elapsed().as_secs_f64();
    match &r {
        Ok(d) => println!("criterion {id:>2} PASS  {name}: {d} [{secs:.1}s]"),
        Err(d) => println!("criterion {id:>2} FAIL  {name}: {d} [{secs:.1}s]"),
    }
    r.is_ok()
}

fn main() {
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |i: usize| filter.is_empty() || filter.contains(&i);
    let mut ok = true;
    if wanted(1) {
        ok &= run(1, "Table 3 fixture", table3);
    }
    if wanted(2) {
        ok &= run(2, "detector precision and recall", detector_fixture);
    }
    if wanted(3) {
        ok &= run(3, "metric oracles", metric_oracles);
    }
    if wanted(4) {
        ok &= run(4, "Agree and reverse set", formula_units);
    }
    if wanted(5) {
        ok &= run(5, "conditioning shapes", conditioning_shapes);
    }
    if wanted(6) {
        ok &= run(6, "gradient check", gradient_check);
    }
    if wanted(7) || wanted(8) || wanted(9) {
        let start = Instant::now();
        match catch_unwind(train_all) {
            Ok(t) => {
                eprintln!("end-to-end training took {:.0}s", start.elapsed().as_secs_f64());
                if wanted(7) {
                    ok &= run(7, "end-to-end control", || end_to_end_control(&t));
                }
                if wanted(8) {
                    ok &= run(8, "restricted impact", || restricted_impact(&t));
                }
                if wanted(9) {
                    ok &= run(9, "quality ordering", || quality_ordering(&t));
                }
            }
            Err(_) => {
                for (i, n) in [(7, "end-to-end control"), (8, "restricted impact"), (9, "quality ordering")] {
                    if wanted(i) {
                        println!("criterion {i:>2} FAIL  {n}: training panicked");
                    }
                }
                ok = false;
            }
        }
    }
    if wanted(10) {
        ok &= run(10, "determinism", determinism);
    }
    if !ok {
        std::process::exit(1);
    }
}
