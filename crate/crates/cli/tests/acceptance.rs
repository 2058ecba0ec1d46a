//! Acceptance suite. Every criterion runs in sequence inside one test so
//! that the runtime budgets are measured without competing threads; one
//! PASS/FAIL line is printed per criterion and the test fails if any
//! criterion fails.

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{path_str, run_bin, write_file, TINY_CONFIG};
use cotask::checkpoint::{load_checkpoint, Checkpoint};
use cotask::commands::{compare_runs, run_gradcheck, transfer_pair};
use cotask::config::RunConfig;
use cotask::pipeline::{samples, train_run};
use cotask::stats::median;
use cotask_core::cotask::{cotask_share, pool_task_features, TaskHead, ALPHA, BETA};
use cotask_core::data::{synth_generate, Example, LabelSchema, SynthSpec, Vocabulary, DEFAULT_SPLIT};
use cotask_core::metrics::{evaluate, label_set};
use cotask_core::train::{dataset_loss, predict_dataset, train, TrainConfig};
use cotask_core::{Model, ModelConfig, Parameters, Rng, ShareForm, SharingStrategy, Tape, Tensor, TokenBatch, Var};
use serde_json::Value;
use tempfile::tempdir;

/// Training settings of the strategy comparison and transfer experiments:
/// the defaults with a learning rate of 3e-3. At 1e-4, ten epochs of a
/// from-scratch encoder do not get past predicting the majority pattern.
fn desk_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        seed,
        ..TrainConfig::default()
    }
}

const COMPARE_SEEDS: u64 = 10;
const CORPUS_SIZE: usize = 2000;
const CORPUS_SEED: u64 = 0;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn report(number: usize, name: &str, outcome: &Outcome) {
    let line = match outcome {
        Ok(detail) => format!("criterion {number:>2} {name}: PASS ({detail})\n"),
        Err(detail) => format!("criterion {number:>2} {name}: FAIL ({detail})\n"),
    };
    // Written around the test harness capture so the verdicts always show.
    let mut stdout = std::io::stdout();
    let _ = stdout.write_all(line.as_bytes());
    let _ = stdout.flush();
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(budget: Duration, elapsed: Duration) -> Result<(), String> {
    check(elapsed <= budget, || format!("took {elapsed:.1?}, budget {budget:?}"))
}

fn default_corpus() -> Vec<Example> {
    synth_generate(CORPUS_SIZE, CORPUS_SEED, &SynthSpec::default()).unwrap()
}

fn c1_gradcheck() -> Outcome {
    let start = Instant::now();
    let lines = run_gradcheck(None, &SharingStrategy::ALL, 0, 1e-5).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut worst: f64 = 0.0;
    for l in &lines {
        let r = &l.report;
        check(r.passed, || format!("{} failed at {:?}: rel {:.2e}", l.strategy, r.worst_param, r.max_rel_err))?;
        check(r.max_rel_err <= 1e-4, || format!("{} rel err {:.2e}", l.strategy, r.max_rel_err))?;
        let has = |n: &str| r.checked_params.iter().any(|p| p == n);
        if l.strategy == SharingStrategy::CoTaskAware {
            check(has(ALPHA) && has(BETA), || "alpha/beta not checked".into())?;
        }
        worst = worst.max(r.max_rel_err);
    }
    within(Duration::from_secs(60), elapsed)?;
    Ok(format!("4 strategies, max rel err {worst:.2e}, {elapsed:.1?}"))
}

fn probs(model: &Model, batch: &TokenBatch) -> Vec<f64> {
    model.predict_proba(batch).unwrap().into_iter().flatten().flatten().collect()
}

fn c2_identity_sharing() -> Outcome {
    let mut worst: f64 = 0.0;
    for draw in 0..20u64 {
        let mut cfg = ModelConfig::default();
        cfg.encoder.vocab_size = 40;
        cfg.strategy = SharingStrategy::CoTaskAware;
        let mut cotask = Model::init(cfg.clone(), 1000 + draw).unwrap();
        let p = cotask.params_mut();
        p.get_mut(ALPHA).unwrap().data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        p.set_frozen_prefix("share.", true);
        let mut kept = Parameters::new();
        for q in cotask.params().iter().filter(|q| !q.name.starts_with("share.")) {
            kept.insert(&q.name, q.tensor.clone(), false).unwrap();
        }
        cfg.strategy = SharingStrategy::SingleTask;
        let stl = Model::from_parts(cfg, kept).unwrap();
        let mut rng = Rng::new(draw);
        let seqs: Vec<Vec<usize>> = (0..4).map(|_| (0..2 + rng.below(12)).map(|_| 2 + rng.below(38)).collect()).collect();
        let batch = TokenBatch::from_sequences(&seqs).unwrap();
        for (a, b) in probs(&cotask, &batch).iter().zip(probs(&stl, &batch)) {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-12, || format!("max deviation {worst:.2e}"))?;
    Ok(format!("20 draws, max deviation {worst:.1e}"))
}

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap()
}

fn share(alpha: &Tensor, beta: &Tensor, h: &[Tensor], layer: usize) -> Vec<Vec<f64>> {
    let mut t = Tape::new();
    let a = t.constant(alpha.clone());
    let b = t.constant(beta.clone());
    let f: Vec<Var> = h.iter().map(|x| t.constant(x.clone())).collect();
    let r = cotask_share(&mut t, &f, a, b, layer, ShareForm::Symmetric).unwrap();
    r.iter().map(|&v| t.value(v).data().to_vec()).collect()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c3_algebra() -> Outcome {
    let (t, layers, d) = (2, 3, 6);
    let mut rng = Rng::new(3);
    let (mut lin, mut comm, mut perm_gap) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let alpha = random(&[t, t], &mut rng);
        let beta = random(&[layers, t, t], &mut rng);
        let l = rng.below(layers);
        let h: Vec<Tensor> = (0..t).map(|_| random(&[3, d], &mut rng)).collect();
        let h2: Vec<Tensor> = (0..t).map(|_| random(&[3, d], &mut rng)).collect();
        let (a, a2) = (rng.uniform_range(-2.0, 2.0), rng.uniform_range(-2.0, 2.0));
        let mix: Vec<Tensor> = h
            .iter()
            .zip(&h2)
            .map(|(x, y)| Tensor::new(vec![3, d], x.data().iter().zip(y.data()).map(|(p, q)| a * p + a2 * q).collect()).unwrap())
            .collect();
        let (lhs, r1, r2) = (share(&alpha, &beta, &mix, l), share(&alpha, &beta, &h, l), share(&alpha, &beta, &h2, l));
        for x in 0..t {
            let rhs: Vec<f64> = r1[x].iter().zip(&r2[x]).map(|(p, q)| a * p + a2 * q).collect();
            lin = lin.max(max_gap(&lhs[x], &rhs));
        }
    }
    for _ in 0..100 {
        let alpha = random(&[t, t], &mut rng);
        let beta = random(&[layers, t, t], &mut rng);
        let h: Vec<Tensor> = (0..t).map(|_| random(&[3, d], &mut rng)).collect();
        let c = rng.uniform_range(0.25, 4.0);
        let (s, f) = (0, 1);
        let mut alpha2 = alpha.clone();
        alpha2.data_mut()[s * t + f] *= c;
        let mut beta2 = beta.clone();
        for l in 0..layers {
            beta2.data_mut()[(l * t + s) * t + f] /= c;
        }
        for l in 0..layers {
            comm = comm.max(max_gap(&share(&alpha, &beta, &h, l)[s], &share(&alpha2, &beta2, &h, l)[s]));
        }
    }
    for _ in 0..100 {
        let alpha = random(&[t, t], &mut rng);
        let beta = random(&[layers, t, t], &mut rng);
        let feats: Vec<Vec<Tensor>> = (0..layers).map(|_| (0..t).map(|_| random(&[2, d], &mut rng)).collect()).collect();
        let mut order: Vec<usize> = (0..layers).collect();
        rng.shuffle(&mut order);
        let mut beta_p = beta.clone();
        for (new_l, &old_l) in order.iter().enumerate() {
            let (dst, src) = (new_l * t * t, old_l * t * t);
            beta_p.data_mut()[dst..dst + t * t].copy_from_slice(&beta.data()[src..src + t * t]);
        }
        let head_seed = rng.next_u64();
        let pooled = |beta: &Tensor, order: &[usize]| -> Vec<f64> {
            let mut tape = Tape::new();
            let mut hr = Rng::new(head_seed);
            let head = TaskHead {
                proj_weight: tape.constant(random(&[5, d], &mut hr)),
                proj_bias: tape.constant(random(&[5], &mut hr)),
                head_weight: tape.constant(random(&[3, 5], &mut hr)),
                head_bias: tape.constant(random(&[3], &mut hr)),
            };
            let a = tape.constant(alpha.clone());
            let b = tape.constant(beta.clone());
            let per_layer: Vec<Var> = order
                .iter()
                .enumerate()
                .map(|(l, &src)| {
                    let f: Vec<Var> = feats[src].iter().map(|x| tape.constant(x.clone())).collect();
                    cotask_share(&mut tape, &f, a, b, l, ShareForm::Symmetric).unwrap()[0]
                })
                .collect();
            let z = pool_task_features(&mut tape, &per_layer, &head).unwrap();
            tape.value(z).data().to_vec()
        };
        let identity: Vec<usize> = (0..layers).collect();
        perm_gap = perm_gap.max(max_gap(&pooled(&beta, &identity), &pooled(&beta_p, &order)));
    }
    check(lin <= 1e-12, || format!("linearity gap {lin:.2e}"))?;
    check(comm <= 1e-12, || format!("scale commutation gap {comm:.2e}"))?;
    check(perm_gap <= 1e-12, || format!("layer permutation gap {perm_gap:.2e}"))?;
    Ok(format!("100 trials each, gaps {lin:.1e} / {comm:.1e} / {perm_gap:.1e}"))
}

fn encode(examples: &[Example], min_count: usize, max_len: usize) -> (Vec<cotask_core::data::Sample>, usize) {
    let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
    let vocab = Vocabulary::build(&texts, min_count);
    (samples(examples, &vocab, max_len), vocab.len())
}

fn c4_overfit() -> Outcome {
    let data = synth_generate(32, 0, &SynthSpec::default()).unwrap();
    let mut cfg = ModelConfig::default();
    let (set, vocab) = encode(&data, 1, cfg.encoder.max_len);
    cfg.encoder.vocab_size = vocab;
    let tc = TrainConfig {
        epochs: 500,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let out = train(Model::init(cfg, tc.seed).unwrap(), &set, &[], &tc).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let weights = tc.task_weights(2).unwrap();
    let loss = dataset_loss(&out.model, &set, &weights, 64).unwrap();
    let logged = out.log.last().unwrap().train_loss;
    check(loss < 0.05, || format!("final train loss {loss:.5}"))?;
    within(Duration::from_secs(120), elapsed)?;
    Ok(format!("final train loss {loss:.5} (last epoch mean with dropout {logged:.4}), {elapsed:.1?}"))
}

fn brute_force_f1(pred: u32, gold: u32, examples: usize, classes: usize) -> (f64, f64) {
    let bit = |v: u32, e: usize, c: usize| v >> (e * classes + c) & 1 == 1;
    let f1 = |tp: f64, fp: f64, fn_: f64| if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
    let (mut weighted, mut support_total, mut tp_all, mut fp_all, mut fn_all) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for c in 0..classes {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for e in 0..examples {
            match (bit(pred, e, c), bit(gold, e, c)) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                _ => {}
            }
        }
        weighted += (tp + fn_) * f1(tp, fp, fn_);
        support_total += tp + fn_;
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
    }
    let weighted = if support_total == 0.0 { 0.0 } else { weighted / support_total };
    (weighted, f1(tp_all, fp_all, fn_all))
}

fn c5_metrics_oracle() -> Outcome {
    let (examples, classes) = (2, 3);
    let cells = examples * classes;
    let sets = |v: u32| -> Vec<Vec<usize>> {
        (0..examples)
            .map(|e| label_set(&(0..classes).map(|c| v >> (e * classes + c) & 1 == 1).collect::<Vec<_>>()))
            .collect()
    };
    let mut cases = 0;
    for pred in 0..1u32 << cells {
        for gold in 0..1u32 << cells {
            let m = evaluate(&sets(pred), &sets(gold), classes).unwrap();
            let (w, micro) = brute_force_f1(pred, gold, examples, classes);
            check((m.weighted.f1 - w).abs() <= 1e-12 && (m.micro.f1 - micro).abs() <= 1e-12, || {
                format!("pred {pred:06b} gold {gold:06b}: weighted {} vs {w}, micro {} vs {micro}", m.weighted.f1, m.micro.f1)
            })?;
            cases += 1;
        }
    }
    Ok(format!("{cases} cases agree"))
}

fn c6_strategy_comparison() -> Outcome {
    let data = default_corpus();
    let base = RunConfig {
        train: desk_train_config(0),
        model: ModelConfig::default(),
    };
    let strategies = [SharingStrategy::SingleTask, SharingStrategy::HardShared, SharingStrategy::CoTaskAware];
    let seeds: Vec<u64> = (0..COMPARE_SEEDS).collect();
    let start = Instant::now();
    let runs = compare_runs(&data, &base, &strategies, &seeds, |_| {}).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let med = |s: SharingStrategy| median(&runs.iter().filter(|r| r.strategy == s).map(|r| r.weighted_f1[0]).collect::<Vec<_>>());
    let (stl, hard, cotask) = (med(strategies[0]), med(strategies[1]), med(strategies[2]));
    let detail = format!("median weighted F1 cotask {cotask:.4}, stl {stl:.4}, hard {hard:.4}, {elapsed:.1?}");
    check(cotask > stl && cotask > hard, || detail.clone())?;
    within(Duration::from_secs(15 * 60), elapsed)?;
    Ok(detail)
}

fn c7_transfer() -> Outcome {
    let data = default_corpus();
    let cfg = RunConfig {
        train: desk_train_config(CORPUS_SEED),
        model: ModelConfig::default(),
    };
    let source = train_run(&data, &cfg).map_err(|e| e.to_string())?;
    let (mut transferred, mut scratch) = (Vec::new(), Vec::new());
    for seed in 0..10 {
        let tc = TrainConfig {
            epochs: TRANSFER_EPOCHS,
            ..desk_train_config(seed)
        };
        let r = transfer_pair(&source.model, &source.vocabulary, &data, &tc, false).map_err(|e| e.to_string())?;
        transferred.push(r.transfer_accuracy);
        scratch.push(r.scratch_accuracy);
    }
    let (t, s) = (median(&transferred), median(&scratch));
    let detail = format!("median accuracy transfer {t:.4}, scratch {s:.4} over 10 paired seeds");
    check(t >= s, || detail.clone())?;
    Ok(detail)
}

const TRANSFER_EPOCHS: usize = 2;

fn c8_determinism() -> Outcome {
    let dir = tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    for name in ["a.jsonl", "b.jsonl"] {
        let (code, _) = run_bin(&["synth", "--n", "1000", "--seed", "7", "--out", path_str(&p(name))]);
        check(code == 0, || format!("synth exit {code}"))?;
    }
    check(std::fs::read(p("a.jsonl")).unwrap() == std::fs::read(p("b.jsonl")).unwrap(), || "synthetic files differ".into())?;

    let cfg = write_file(dir.path(), "c.json", TINY_CONFIG);
    let small = p("small.jsonl");
    run_bin(&["synth", "--n", "200", "--seed", "1", "--out", path_str(&small)]);
    for ckpt in ["m1.json", "m2.json"] {
        let (code, _) = run_bin(&[
            "train", "--data", path_str(&small), "--config", path_str(&cfg), "--seed", "3", "--out-checkpoint", path_str(&p(ckpt)),
        ]);
        check(code == 0, || format!("train exit {code}"))?;
    }
    let read = |name: &str| std::fs::read(p(name)).unwrap();
    check(read("m1.json.log.jsonl") == read("m2.json.log.jsonl"), || "training logs differ".into())?;
    check(read("m1.json") == read("m2.json"), || "checkpoints differ".into())?;

    let data = cotask::jsonl::load_jsonl(&small, &LabelSchema::default()).unwrap();
    let mut run_cfg: RunConfig = serde_json::from_str(TINY_CONFIG).unwrap();
    run_cfg.train.seed = 3;
    let run = train_run(&data, &run_cfg).map_err(|e| e.to_string())?;
    Checkpoint::new(&run.model, &run_cfg.train, &LabelSchema::default(), &run.vocabulary, run.threshold)
        .save(&p("m3.json"))
        .unwrap();
    let loaded = load_checkpoint(&p("m3.json")).map_err(|e| e.to_string())?;
    let mut rng = Rng::new(20);
    let words = run.vocabulary.tokens();
    let inputs: Vec<Example> = (0..20)
        .map(|_| {
            let text: Vec<&str> = (0..1 + rng.below(15)).map(|_| words[3 + rng.below(words.len() - 3)].as_str()).collect();
            Example::new(text.join(" "), vec![false; 9], vec![false, false, true])
        })
        .collect();
    let max_len = run_cfg.model.encoder.max_len;
    let bits = |m: &Model, v: &Vocabulary| -> Vec<u64> {
        predict_dataset(m, &samples(&inputs, v, max_len), 7).unwrap().into_iter().flatten().flatten().map(f64::to_bits).collect()
    };
    check(bits(&run.model, &run.vocabulary) == bits(&loaded.model, &loaded.vocabulary), || "predictions changed after reload".into())?;
    Ok("identical synth files, logs, checkpoints; 20 reloaded predictions bitwise equal".into())
}

fn c9_defaults() -> Outcome {
    let ckpt_cfg = RunConfig::default();
    let json: Value = serde_json::to_value(&ckpt_cfg).unwrap();
    let t = &json["train"];
    let m = &json["model"];
    let expect = [
        ("epochs", t["epochs"] == 10),
        ("batch_size", t["batch_size"] == 32),
        ("learning_rate", t["learning_rate"] == 0.0001),
        ("dropout", t["dropout_p"] == 0.5),
        ("loss weights", t["loss_weight_primary"] == 0.7 && t["loss_weight_aux"] == 0.3),
        ("proj_dim", m["proj_dim"] == 256),
        ("tap_top_k", m["encoder"]["tap_top_k"] == 3),
        ("split", t["split_ratios"] == serde_json::json!([0.7, 0.1, 0.2])),
    ];
    for (name, ok) in expect {
        check(ok, || format!("{name} differs: {json}"))?;
    }
    check(DEFAULT_SPLIT == [0.7, 0.1, 0.2], || "DEFAULT_SPLIT".into())?;
    let resolved = RunConfig::resolve(None, &Default::default()).unwrap();
    check(resolved == ckpt_cfg, || "command-line defaults differ from library defaults".into())?;

    let cfg = ModelConfig::default();
    let vocab = Vocabulary::from_tokens((0..cfg.encoder.vocab_size).map(|i| format!("w{i}")).collect());
    let model = Model::init(cfg, 0).unwrap();
    let doc: Value =
        serde_json::from_str(&Checkpoint::new(&model, &TrainConfig::default(), &LabelSchema::default(), &vocab, 0.5).to_json()).unwrap();
    check(doc["train_config"] == json["train"], || "checkpoint train_config differs".into())?;
    check(doc["model_config"]["proj_dim"] == 256 && doc["model_config"]["encoder"]["tap_top_k"] == 3, || "checkpoint model_config differs".into())?;
    Ok("10 epochs, batch 32, lr 1e-4, dropout 0.5, weights 0.7/0.3, dim 256, top-3, 70/10/20".into())
}

fn validate_prf(v: &Value) -> bool {
    ["precision", "recall", "f1"].iter().all(|k| v[k].as_f64().is_some_and(|x| (0.0..=1.0).contains(&x)))
}

fn validate_metrics(v: &Value) -> Result<(), String> {
    let ok = v["split"].is_string()
        && v["num_examples"].as_u64().is_some_and(|n| n > 0)
        && v["threshold"].as_f64().is_some_and(|t| t > 0.0 && t < 1.0)
        && v["tasks"].as_array().is_some_and(|tasks| {
            tasks.len() == 2
                && tasks.iter().zip([9, 3]).all(|(t, classes)| {
                    t["task"].is_string()
                        && t["threshold"].is_f64()
                        && validate_prf(&t["weighted"])
                        && validate_prf(&t["micro"])
                        && t["per_class"].as_array().is_some_and(|pc| {
                            pc.len() == classes
                                && pc.iter().all(|c| c["name"].is_string() && c["support"].is_u64() && validate_prf(c))
                        })
                })
        });
    check(ok, || format!("metrics JSON does not match the schema: {v}"))
}

fn c10_end_to_end() -> Outcome {
    let dir = tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let cfg = write_file(dir.path(), "c.json", TINY_CONFIG);
    let (code, _) = run_bin(&["synth", "--n", "300", "--seed", "5", "--out", path_str(&data)]);
    check(code == 0, || format!("synth exit {code}"))?;
    for strategy in ["stl", "hard", "cross-stitch", "cotask"] {
        let ckpt = dir.path().join(format!("{strategy}.json"));
        let (code, out) = run_bin(&[
            "train", "--data", path_str(&data), "--config", path_str(&cfg), "--strategy", strategy, "--out-checkpoint", path_str(&ckpt),
        ]);
        check(code == 0, || format!("train {strategy} exit {code}"))?;
        let summary: Value = serde_json::from_str(out.trim()).map_err(|e| e.to_string())?;
        check(summary["strategy"] == strategy, || format!("summary {summary}"))?;

        let (code, out) = run_bin(&["eval", "--checkpoint", path_str(&ckpt), "--data", path_str(&data)]);
        check(code == 0, || format!("eval {strategy} exit {code}"))?;
        validate_metrics(&serde_json::from_str(out.trim()).map_err(|e| e.to_string())?)?;

        let (code, out) = run_bin(&["predict", "--checkpoint", path_str(&ckpt), "--text", "lucky me i am always so tired"]);
        check(code == 0, || format!("predict {strategy} exit {code}"))?;
        let pred: Value = serde_json::from_str(out.trim()).map_err(|e| e.to_string())?;
        check(pred["tasks"].as_array().is_some_and(|t| t.len() == 2), || format!("prediction {pred}"))?;
    }
    Ok("synth, train, eval, predict exit 0 for all 4 strategies".into())
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        ("gradient check, all strategies", c1_gradcheck),
        ("identity sharing reduces to single task", c2_identity_sharing),
        ("sharing algebra", c3_algebra),
        ("overfit smoke test", c4_overfit),
        ("metrics brute-force oracle", c5_metrics_oracle),
        ("multi-task benefit on the synthetic corpus", c6_strategy_comparison),
        ("transfer versus from-scratch", c7_transfer),
        ("determinism and persistence", c8_determinism),
        ("defaults audit", c9_defaults),
        ("end-to-end pipeline", c10_end_to_end),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        report(i + 1, name, &outcome);
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
