//! Acceptance checks, one line per criterion. Runs offline with the mock chat
//! provider and the hashed embedder.

use std::collections::{HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use radsim_cli::{cmd_ingest, cmd_label, cmd_score, Overrides, RunConfig};
use radsim_core::corpus::{
    cross_pairs, load_finding_vectors, split_groups, FindingSchema, LabelSource,
};
use radsim_core::embedding::{
    EmbeddingError, EmbeddingFingerprint, EmbeddingProvider, HashedEmbedding,
};
use radsim_core::gt::{cosine, encode_vector};
use radsim_core::harness::{
    hex_center, hexbin, read_scores_csv, DifferenceMode, Method, PairScore, SummaryTable,
};
use radsim_core::labeling::{Lexicon, MockProvider};
use radsim_core::lexical::{bleu, rouge_l, rouge_n, tokenize, BleuConfig, TokenSequence};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn fixture_config(out: &Path) -> RunConfig {
    let mut cfg =
        RunConfig::load(&workspace().join("fixtures/radsim.toml")).expect("fixture config");
    cfg.apply(&Overrides {
        output_dir: Some(out.to_path_buf()),
        ..Overrides::default()
    });
    cfg
}

// ---- brute-force metric oracle ----

fn count_occurrences(hay: &[String], needle: &[String]) -> usize {
    if needle.len() > hay.len() {
        return 0;
    }
    (0..=hay.len() - needle.len())
        .filter(|&i| &hay[i..i + needle.len()] == needle)
        .count()
}

/// (clipped overlap, candidate n-gram total, reference n-gram total)
fn oracle_overlap(c: &[String], r: &[String], n: usize) -> (usize, usize, usize) {
    let total = |t: &[String]| t.len().saturating_sub(n - 1).min(t.len());
    let mut seen: Vec<&[String]> = Vec::new();
    let mut overlap = 0;
    if c.len() >= n {
        for i in 0..=c.len() - n {
            let g = &c[i..i + n];
            if seen.contains(&g) {
                continue;
            }
            seen.push(g);
            overlap += count_occurrences(c, g).min(count_occurrences(r, g));
        }
    }
    (
        overlap,
        if c.len() >= n { total(c) } else { 0 },
        if r.len() >= n { total(r) } else { 0 },
    )
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn frac(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn oracle_rouge_n(c: &[String], r: &[String], n: usize) -> f64 {
    let (o, ct, rt) = oracle_overlap(c, r, n);
    f1(frac(o, ct), frac(o, rt))
}

fn is_subsequence(s: &[&String], t: &[String]) -> bool {
    let mut it = t.iter();
    s.iter().all(|x| it.any(|y| y == *x))
}

/// Longest subsequence of `c` that is also a subsequence of `r`, by trying
/// every subset of positions in `c`.
fn oracle_lcs(c: &[String], r: &[String]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << c.len()) {
        let sub: Vec<&String> = (0..c.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| &c[i])
            .collect();
        if sub.len() > best && is_subsequence(&sub, r) {
            best = sub.len();
        }
    }
    best
}

fn oracle_rouge_l(c: &[String], r: &[String]) -> f64 {
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let l = oracle_lcs(c, r);
    f1(frac(l, c.len()), frac(l, r.len()))
}

fn oracle_bleu(c: &[String], r: &[String]) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let mut product = 1.0;
    for n in 1..=4 {
        let (o, ct, _) = oracle_overlap(c, r, n);
        if ct == 0 || o == 0 {
            return 0.0;
        }
        product *= o as f64 / ct as f64;
    }
    let bp = if c.len() > r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    product.powf(0.25) * bp
}

fn compare_metrics(c: &[String], r: &[String], worst: &mut f64) -> Result<(), String> {
    let cs = TokenSequence::from_tokens(c.to_vec()).unwrap();
    let rs = TokenSequence::from_tokens(r.to_vec()).unwrap();
    let got = [
        rouge_n(&cs, &rs, 1).unwrap().f1,
        rouge_n(&cs, &rs, 2).unwrap().f1,
        rouge_l(&cs, &rs).f1,
        bleu(&cs, &rs, BleuConfig::default()).unwrap(),
    ];
    let want = [
        oracle_rouge_n(c, r, 1),
        oracle_rouge_n(c, r, 2),
        oracle_rouge_l(c, r),
        oracle_bleu(c, r),
    ];
    for (k, (g, w)) in got.iter().zip(want).enumerate() {
        let d = (g - w).abs();
        *worst = worst.max(d);
        ensure(d <= 1e-9, || {
            format!("metric {k} on {c:?} vs {r:?}: got {g}, oracle {w}")
        })?;
    }
    Ok(())
}

const CURATED: [(&str, &str); 20] = [
    ("the cat sat on the mat", "the cat is on the mat"),
    (
        "there is a small left pleural effusion",
        "small left pleural effusion is present",
    ),
    (
        "no acute cardiopulmonary process",
        "no acute cardiopulmonary abnormality",
    ),
    (
        "heart size is normal and the lungs are clear",
        "the lungs are clear and heart size is normal",
    ),
    ("", "lungs are clear"),
    ("lungs are clear", ""),
    ("", ""),
    ("effusion", "effusion"),
    ("effusion effusion effusion", "effusion"),
    ("the the the the", "the cat the cat"),
    ("cardiomegaly", "the heart is enlarged"),
    (
        "mild pulmonary edema",
        "mild pulmonary vascular congestion and edema",
    ),
    (
        "right lower lobe consolidation concerning for pneumonia",
        "consolidation in the right lower lobe",
    ),
    (
        "no pneumothorax no effusion no consolidation",
        "no effusion no consolidation no pneumothorax",
    ),
    ("a b c d e f", "f e d c b a"),
    ("a b a b a b", "b a b a b a"),
    (
        "Support devices: ET tube 4 cm above carina.",
        "ET tube terminates 4 cm above the carina",
    ),
    (
        "small bilateral effusions",
        "bilateral small effusions with bibasilar atelectasis",
    ),
    ("stable", "unchanged"),
    (
        "left apical pneumothorax, 2 cm",
        "2 cm left apical pneumothorax",
    ),
];

/// Values from an independent script for the first four curated cases:
/// rouge1, rouge2, rougeL, bleu.
const FROZEN: [[f64; 4]; 4] = [
    [0.8333333333333334, 0.6, 0.8333333333333334, 0.0],
    [
        0.7692307692307692,
        0.5454545454545454,
        0.6153846153846153,
        0.4347208719449914,
    ],
    [0.75, 0.6666666666666666, 0.75, 0.0],
    [1.0, 0.75, 0.4444444444444444, 0.6147881529512643],
];

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut seqs: Vec<Vec<String>> = vec![vec![]];
    for len in 1..=5 {
        for bits in 0u32..(1 << len) {
            seqs.push(
                (0..len)
                    .map(|i| if bits & (1 << i) != 0 { "b" } else { "a" }.to_string())
                    .collect(),
            );
        }
    }
    let mut worst = 0.0f64;
    for c in &seqs {
        for r in &seqs {
            compare_metrics(c, r, &mut worst)?;
        }
    }
    for (c, r) in CURATED {
        let (c, r) = (tokenize(c), tokenize(r));
        compare_metrics(c.tokens(), r.tokens(), &mut worst)?;
    }
    for ((c, r), want) in CURATED.iter().zip(FROZEN) {
        let (c, r) = (tokenize(c), tokenize(r));
        let got = [
            rouge_n(&c, &r, 1).unwrap().f1,
            rouge_n(&c, &r, 2).unwrap().f1,
            rouge_l(&c, &r).f1,
            bleu(&c, &r, BleuConfig::default()).unwrap(),
        ];
        for (g, w) in got.iter().zip(want) {
            ensure((g - w).abs() <= 1e-9, || {
                format!("frozen value mismatch: got {g}, want {w}")
            })?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed.as_secs_f64() < 5.0, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} exhaustive pairs + {} curated, max |diff| {worst:.1e}, {:.2}s",
        seqs.len() * seqs.len(),
        CURATED.len(),
        elapsed.as_secs_f64()
    ))
}

fn criterion_2() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("labels.csv");
    let rows = [
        ("e01", ["1.0", "0.0", "-1.0", ""]),
        ("e02", ["", "", "", "1.0"]),
        ("e03", ["0.0", "0.0", "0.0", ""]),
        ("e04", ["-1.0", "-1.0", "", ""]),
        ("e05", ["1", "0", "-1", ""]),
        ("e06", ["", "1.0", "", ""]),
        ("e07", ["1.0", "1.0", "1.0", ""]),
        ("e08", ["-1.0", "", "1.0", "0.0"]),
        ("e09", ["", "", "", ""]),
        ("e10", ["0.0", "-1.0", "1.0", ""]),
    ];
    let expected: [[f64; 4]; 10] = [
        [1.0, 0.0, -1.0, -2.0],
        [-2.0, -2.0, -2.0, 1.0],
        [0.0, 0.0, 0.0, -2.0],
        [-1.0, -1.0, -2.0, -2.0],
        [1.0, 0.0, -1.0, -2.0],
        [-2.0, 1.0, -2.0, -2.0],
        [1.0, 1.0, 1.0, -2.0],
        [-1.0, -2.0, 1.0, 0.0],
        [-2.0, -2.0, -2.0, -2.0],
        [0.0, -1.0, 1.0, -2.0],
    ];
    let mut csv = String::from("report_id,Atelectasis,Edema,Pneumonia,No Finding\n");
    for (id, cells) in &rows {
        csv.push_str(&format!("{id},{}\n", cells.join(",")));
    }
    std::fs::write(&path, csv).map_err(|e| e.to_string())?;
    let schema = FindingSchema::new(
        ["Atelectasis", "Edema", "Pneumonia", "No Finding"]
            .map(String::from)
            .to_vec(),
        "No Finding",
    )
    .map_err(|e| e.to_string())?;
    let vectors =
        load_finding_vectors(&path, &schema, LabelSource::CheXpert).map_err(|e| e.to_string())?;
    ensure(vectors.len() == 10, || {
        format!("{} rows loaded", vectors.len())
    })?;
    for (v, want) in vectors.iter().zip(expected) {
        let enc = encode_vector(v, &schema).map_err(|e| e.to_string())?;
        ensure(enc.values == want, || {
            format!("{}: got {:?}, want {want:?}", v.report_id, enc.values)
        })?;
    }
    Ok("10 rows encode exactly".into())
}

fn criterion_3() -> Outcome {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(20240501);
    let mut unit = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
    let mut worst_self = 0.0f64;
    let mut worst_scale = 0.0f64;
    for i in 0..1000 {
        let dim = 2 + i % 30;
        let u: Vec<f64> = (0..dim).map(|_| unit()).collect();
        let v: Vec<f64> = (0..dim).map(|_| unit()).collect();
        let k = 1e-3 + (unit() + 1.0) * 500.0;
        let uv = cosine(&u, &v).map_err(|e| e.to_string())?;
        let vu = cosine(&v, &u).map_err(|e| e.to_string())?;
        ensure(uv.to_bits() == vu.to_bits(), || {
            format!("pair {i}: asymmetric {uv} vs {vu}")
        })?;
        ensure((-1.0..=1.0).contains(&uv), || {
            format!("pair {i}: out of bounds {uv}")
        })?;
        let uu = cosine(&u, &u).map_err(|e| e.to_string())?;
        worst_self = worst_self.max((uu - 1.0).abs());
        let scaled: Vec<f64> = u.iter().map(|x| x * k).collect();
        let su = cosine(&scaled, &v).map_err(|e| e.to_string())?;
        worst_scale = worst_scale.max((su - uv).abs());
    }
    ensure(worst_self <= 1e-12, || {
        format!("self-similarity off by {worst_self:e}")
    })?;
    ensure(worst_scale <= 1e-12, || {
        format!("scale invariance off by {worst_scale:e}")
    })?;
    Ok(format!(
        "1000 pairs, self {worst_self:.1e}, scale {worst_scale:.1e}"
    ))
}

fn criterion_4(fixture_scores: &[PairScore]) -> Outcome {
    let ids: Vec<String> = (0..500).map(|i| format!("syn{i:04}")).collect();
    let set = split_groups(&ids, 11, Some(250)).map_err(|e| e.to_string())?;
    let set = cross_pairs(set).map_err(|e| e.to_string())?;
    let a: HashSet<&String> = set.group_a.iter().collect();
    let b: HashSet<&String> = set.group_b.iter().collect();
    ensure(
        a.len() == 250 && b.len() == 250 && a.is_disjoint(&b),
        || "groups are not 250/250 disjoint".into(),
    )?;
    let unique: HashSet<&(String, String)> = set.pairs.iter().collect();
    ensure(set.pairs.len() == 62_500 && unique.len() == 62_500, || {
        format!("{} pairs, {} unique", set.pairs.len(), unique.len())
    })?;
    ensure(
        set.pairs
            .iter()
            .all(|(x, y)| a.contains(x) && b.contains(y)),
        || "pair crosses wrong way".into(),
    )?;
    ensure(fixture_scores.len() == 324, || {
        format!("fixture produced {} PairScores", fixture_scores.len())
    })?;
    Ok("250x250 = 62500 unique pairs; fixture 18x18 = 324 PairScores".into())
}

struct GoldenRun {
    scores: Vec<PairScore>,
    detail: String,
}

fn run_bin(config: &Path, out: &Path, stage: &str) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_radsim"))
        .args(["--config"])
        .arg(config)
        .arg("--output-dir")
        .arg(out)
        .arg(stage)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || {
        format!(
            "`radsim {stage}` failed: {}",
            String::from_utf8_lossy(&status.stderr)
        )
    })
}

fn criterion_5(out: &Path) -> Result<GoldenRun, String> {
    let start = Instant::now();
    let config = workspace().join("fixtures/radsim.toml");
    for stage in ["ingest", "label", "score", "report"] {
        run_bin(&config, out, stage)?;
    }
    let elapsed = start.elapsed();
    let mut files = vec![("scores.csv".to_string(), out.join("scores.csv"))];
    files.push(("summary.md".into(), out.join("report/summary.md")));
    for entry in std::fs::read_dir(golden_dir()).map_err(|e| e.to_string())? {
        let name = entry
            .map_err(|e| e.to_string())?
            .file_name()
            .to_string_lossy()
            .into_owned();
        if name.ends_with(".svg") {
            files.push((name.clone(), out.join("report").join(&name)));
        }
    }
    let svgs = files.len() - 2;
    ensure(svgs == 10, || {
        format!("expected 10 golden SVGs, found {svgs}")
    })?;
    for (name, produced) in &files {
        let want = std::fs::read(golden_dir().join(name)).map_err(|e| format!("{name}: {e}"))?;
        let got = std::fs::read(produced).map_err(|e| format!("{}: {e}", produced.display()))?;
        ensure(got == want, || format!("{name} differs from golden"))?;
    }
    ensure(elapsed.as_secs_f64() < 60.0, || format!("took {elapsed:?}"))?;
    let scores = read_scores_csv(&out.join("scores.csv")).map_err(|e| e.to_string())?;
    Ok(GoldenRun {
        scores,
        detail: format!(
            "{} files byte-identical, {:.2}s",
            files.len(),
            elapsed.as_secs_f64()
        ),
    })
}

fn criterion_6(scores: &[PairScore]) -> Outcome {
    let paraphrases = scores
        .iter()
        .filter(|s| s.gt_chexpert.is_some_and(|g| g == 1.0) && s.bleu == 0.0)
        .count();
    ensure(paraphrases > 0, || {
        "fixture has no clinically identical pair with zero BLEU".into()
    })?;
    let table =
        SummaryTable::compute(scores, DifferenceMode::Absolute).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for source in LabelSource::ALL {
        let cell = |m: Method| {
            table
                .get(m, source)
                .map(|c| c.mean_difference)
                .ok_or("missing cell".to_string())
        };
        let (gpt, bl, r2) = (
            cell(Method::GptSim)?,
            cell(Method::Bleu)?,
            cell(Method::Rouge2F1)?,
        );
        ensure(gpt < bl && gpt < r2, || {
            format!("{source}: GPT_sim {gpt} not below BLEU {bl} and ROUGE-2 {r2}")
        })?;
        parts.push(format!("{source} {gpt:.4} < {bl:.4}, {r2:.4}"));
    }
    Ok(format!(
        "{}; {paraphrases} paraphrase pairs",
        parts.join("; ")
    ))
}

fn criterion_7() -> Outcome {
    let r = 0.05;
    // (q, s) -> number of points placed in that cell
    let cells: [((i64, i64), usize); 6] = [
        ((0, 0), 150),
        ((3, 2), 101),
        ((-4, 6), 100),
        ((7, -3), 1),
        ((-2, -5), 250),
        ((10, 0), 99),
    ];
    let mut scores = Vec::new();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
    for &((q, s), n) in &cells {
        let (cx, cy) = hex_center(q, s, r);
        for k in 0..n {
            // stay well inside the hexagon's inscribed circle
            let angle = (rng.next_u64() % 3600) as f64 / 3600.0 * std::f64::consts::TAU;
            let rad = r * 0.6 * (k % 10) as f64 / 10.0;
            scores.push(PairScore {
                a_id: format!("q{q}s{s}"),
                b_id: format!("k{k}"),
                gt_chexpert: Some(cx + rad * angle.cos()),
                gt_negbio: None,
                gpt_sim: cy + rad * angle.sin(),
                rouge1_f1: 0.0,
                rouge2_f1: 0.0,
                rougel_f1: 0.0,
                bleu: 0.0,
            });
        }
    }
    let total: usize = cells.iter().map(|c| c.1).sum();
    let known: HashMap<(i64, i64), usize> = cells.iter().copied().collect();

    let all =
        hexbin(&scores, Method::GptSim, LabelSource::CheXpert, r, 0).map_err(|e| e.to_string())?;
    ensure(all.bins.len() == cells.len(), || {
        format!("{} bins at min_count 0", all.bins.len())
    })?;
    for b in &all.bins {
        ensure(known.get(&(b.q, b.s)) == Some(&b.count), || {
            format!("bin ({}, {}) has {}", b.q, b.s, b.count)
        })?;
    }
    let conserved: usize = all.bins.iter().map(|b| b.count).sum();
    ensure(conserved == total && all.points == total, || {
        format!("counts {conserved} of {total}")
    })?;

    let dense = hexbin(&scores, Method::GptSim, LabelSource::CheXpert, r, 100)
        .map_err(|e| e.to_string())?;
    let kept: HashSet<(i64, i64)> = dense.bins.iter().map(|b| (b.q, b.s)).collect();
    let want: HashSet<(i64, i64)> = cells.iter().filter(|c| c.1 > 100).map(|c| c.0).collect();
    ensure(kept == want, || {
        format!("min_count 100 kept {kept:?}, want {want:?}")
    })?;
    Ok(format!(
        "{total} points conserved in {} bins; {} bins exceed 100",
        all.bins.len(),
        kept.len()
    ))
}

#[derive(Clone)]
struct CountingEmbedder {
    inner: HashedEmbedding,
    calls: Arc<AtomicUsize>,
}

impl EmbeddingProvider for CountingEmbedder {
    fn fingerprint(&self) -> EmbeddingFingerprint {
        self.inner.fingerprint()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.embed_batch(texts)
    }
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = fixture_config(dir.path());
    cmd_ingest(&cfg).map_err(|e| e.to_string())?;
    let lexicon = || Lexicon::load(cfg.chat.lexicon.as_ref().unwrap()).map_err(|e| e.to_string());
    let embedder = || CountingEmbedder {
        inner: HashedEmbedding::new(cfg.embedding.dim, cfg.embedding.hash_seed).unwrap(),
        calls: Arc::new(AtomicUsize::new(0)),
    };

    let first_chat = MockProvider::new(lexicon()?).with_model("mock-lexicon");
    cmd_label(&cfg, &first_chat).map_err(|e| e.to_string())?;
    let first_embed = embedder();
    cmd_score(&cfg, first_embed.clone()).map_err(|e| e.to_string())?;
    let scores_before = std::fs::read(cfg.scores_path()).map_err(|e| e.to_string())?;
    ensure(
        first_chat.call_count() > 0 && first_embed.calls.load(Ordering::SeqCst) > 0,
        || "first run made no provider calls".into(),
    )?;

    let second_chat = MockProvider::new(lexicon()?).with_model("mock-lexicon");
    cmd_label(&cfg, &second_chat).map_err(|e| e.to_string())?;
    let second_embed = embedder();
    cmd_score(&cfg, second_embed.clone()).map_err(|e| e.to_string())?;
    let chat_calls = second_chat.call_count();
    let embed_calls = second_embed.calls.load(Ordering::SeqCst);
    ensure(chat_calls == 0 && embed_calls == 0, || {
        format!("repeat run made {chat_calls} chat and {embed_calls} embedding calls")
    })?;
    let scores_after = std::fs::read(cfg.scores_path()).map_err(|e| e.to_string())?;
    ensure(scores_before == scores_after, || {
        "scores.csv changed on the cached rerun".into()
    })?;
    Ok(format!(
        "first run {} chat / {} embedding calls, repeat run 0 / 0",
        first_chat.call_count(),
        first_embed.calls.load(Ordering::SeqCst)
    ))
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    let out = tempfile::tempdir().expect("tempdir");
    let golden = guarded(|| criterion_5(out.path()));
    let fixture_scores = golden
        .as_ref()
        .map(|g| g.scores.clone())
        .unwrap_or_default();

    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "metric oracle equivalence", guarded(criterion_1)),
        (2, "encoding fidelity", guarded(criterion_2)),
        (3, "cosine properties", guarded(criterion_3)),
        (4, "pair counts", guarded(|| criterion_4(&fixture_scores))),
        (
            5,
            "end-to-end golden run",
            golden
                .as_ref()
                .map(|g| g.detail.clone())
                .map_err(Clone::clone),
        ),
        (
            6,
            "GPT_sim closest to GT",
            golden
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|g| guarded(|| criterion_6(&g.scores))),
        ),
        (7, "hexbin correctness", guarded(criterion_7)),
        (8, "cache soundness", guarded(criterion_8)),
    ];

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
