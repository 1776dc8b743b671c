//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.
//!
//! Timed criteria hold a shared lock so wall-clock budgets are not inflated
//! by other tests running on the same cores.

use std::collections::HashSet;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use drip_core::data::{
    generate_synthetic, make_mdrau_split, DatasetBuilder, EvaluationSplit, InteractionDataset,
    SyntheticConfig,
};
use drip_core::encoder::{train_all_encoders, BprConfig, DomainEncoder};
use drip_core::evaluation::{
    evaluate, kld_at_k, ndcg_at_k, recall_at_k, EvalMode, EvalOptions, KLD_SMOOTHING,
};
use drip_core::inference::{
    recommend_mt, recommend_st, unseen_domains, DripRecommender, InferenceError, Recommender,
};
use drip_core::model::{select_tokens, DripModel, ModelConfig, Token};
use drip_core::numerics::linalg::Matrix;
use drip_core::numerics::{check_gradients, GradCheckOptions, Metadata};
use drip_core::training::{
    adaptive_probabilities_unclamped, compute_loss, epsilon_schedule, sample_mask, train, MaskPolicy,
    MaskedUser, TrainConfig,
};
use drip_core::variants::{
    fixed_weights, train_many_to_one, train_single_domain, ManyToOneRecommender, PostProcessing,
    SingleDomainConfig, VariantKind,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    println!("criterion {id} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect())
}

/// Every user gets 1..=4 items in each domain of a random subset of size ≥ 2.
fn random_dataset(users: usize, domains: usize, items: usize, rng: &mut impl Rng) -> InteractionDataset {
    let mut b = DatasetBuilder::new();
    for k in 0..domains {
        for v in 0..items {
            b.push("anchor", &format!("d{k}_i{v}"), &format!("d{k}")).unwrap();
        }
    }
    for u in 0..users {
        let mut doms: Vec<usize> = (0..domains).collect();
        doms.shuffle(rng);
        let n = rng.random_range(2..=domains);
        for &k in &doms[..n] {
            let mut pool: Vec<usize> = (0..items).collect();
            pool.shuffle(rng);
            for &v in &pool[..rng.random_range(1..=4)] {
                b.push(&format!("u{u}"), &format!("d{k}_i{v}"), &format!("d{k}")).unwrap();
            }
        }
    }
    b.finish().unwrap()
}

fn random_encoders(ds: &InteractionDataset, dim: usize, rng: &mut impl Rng) -> Vec<DomainEncoder> {
    (0..ds.num_domains())
        .map(|k| {
            let rows: Vec<Option<usize>> = (0..ds.num_users()).map(Some).collect();
            DomainEncoder::from_tables(
                k,
                rows,
                random_matrix(ds.num_users(), dim, 1.0, rng),
                random_matrix(ds.num_items(k), dim, 1.0, rng),
            )
            .unwrap()
        })
        .collect()
}

fn perturbed_model(cfg: ModelConfig, seed: u64, amount: f64) -> DripModel {
    let mut model = DripModel::new(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let ids: Vec<_> = model.store().ids().collect();
    for id in ids {
        for v in model.store_mut().value_mut(id) {
            *v += rng.random_range(-amount..amount);
        }
    }
    model
}

#[test]
fn criterion_1_gradient_correctness() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ds = random_dataset(10, 3, 20, &mut rng);
    let encoders = random_encoders(&ds, 4, &mut rng);
    let cfg = ModelConfig {
        num_domains: 3,
        embed_dim: 4,
        width: 8,
        layers: 1,
        heads: 1,
        dropout: 0.1,
    };
    let mut model = perturbed_model(cfg.clone(), 3, 0.3);
    let batch: Vec<MaskedUser> = (0..ds.num_users())
        .filter(|&u| ds.user_id(u) != "anchor")
        .map(|u| {
            let seen = ds.seen_row(u).to_vec();
            let plan = sample_mask(&seen, &[1.0; 3], 0.5, 1.0, &mut rng).unwrap();
            MaskedUser { user: u, seen, mask: plan.mask }
        })
        .collect();
    compute_loss::<ChaCha8Rng>(&mut model, &encoders, &ds, &batch, true, None).unwrap();
    let report = check_gradients(
        |store| {
            let mut m = DripModel::from_store(cfg.clone(), store.clone()).unwrap();
            compute_loss::<ChaCha8Rng>(&mut m, &encoders, &ds, &batch, true, None).unwrap().loss
        },
        model.store(),
        GradCheckOptions {
            samples_per_param: usize::MAX,
            ..Default::default()
        },
    )
    .unwrap();
    let elapsed = start.elapsed();
    let pass = report.max_rel_error < 1e-4 && elapsed < Duration::from_secs(30);
    verdict(
        1,
        "gradient correctness",
        pass,
        &format!(
            "{} coordinates, max rel error {:.2e} (< 1e-4), {:.2?} (< 30s)",
            report.checked, report.max_rel_error, elapsed
        ),
    );
    assert!(pass, "{report:?}");
}

#[test]
fn criterion_2_probability_contracts() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut users = 0;
    for trial in 0..20 {
        let k = rng.random_range(2..=5);
        let ds = random_dataset(50, k, rng.random_range(5..60), &mut rng);
        let encoders = random_encoders(&ds, 6, &mut rng);
        let model = perturbed_model(
            ModelConfig {
                width: 8,
                layers: 1,
                heads: 2,
                ..ModelConfig::new(k, 6)
            },
            trial,
            1.0,
        );
        let view = model.view();
        for u in (0..ds.num_users()).filter(|&u| ds.user_id(u) != "anchor") {
            let enc = view.encode(&select_tokens(&encoders, u, ds.seen_row(u), None).unwrap()).unwrap();
            let pd: f64 = view.domain_preference(enc.summary()).iter().sum();
            worst = worst.max((pd - 1.0).abs());
            for d in 0..k {
                let pv: f64 = view.item_preference(d, enc.domain_row(d), &encoders[d]).unwrap().iter().sum();
                worst = worst.max((pv - 1.0).abs());
            }
            users += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = users >= 1000 && worst <= 1e-6 && elapsed < Duration::from_secs(10);
    verdict(
        2,
        "probability contracts",
        pass,
        &format!("{users} users, max |sum - 1| {worst:.2e} (<= 1e-6), {elapsed:.2?} (< 10s)"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_masking_invariants() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = 5;
    let ds = random_dataset(60, k, 15, &mut rng);
    let encoders = random_encoders(&ds, 3, &mut rng);
    let users: Vec<usize> = (0..ds.num_users()).filter(|&u| ds.user_id(u) != "anchor").collect();
    let mut violations = 0;
    let mut worst_mean_gap: f64 = 0.0;
    for i in 0..10_000 {
        let u = users[i % users.len()];
        let seen = ds.seen_row(u).to_vec();
        let prefs: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
        let rho = rng.random_range(0.1..0.9);
        let eps = rng.random::<f64>();
        let plan = sample_mask(&seen, &prefs, rho, eps, &mut rng).unwrap();
        let tokens = select_tokens(&encoders, u, &seen, Some(&plan.mask)).unwrap();
        let unseen_masked = (0..k).all(|d| seen[d] || matches!(tokens[d], Token::Mask));
        let masked_seen = (0..k).filter(|&d| seen[d] && plan.mask[d]).count();
        let unmasked_seen = (0..k).filter(|&d| seen[d] && !plan.mask[d]).count();
        let ex = MaskedUser { user: u, seen: seen.clone(), mask: plan.mask.clone() };
        let terms_ok = ex.loss_terms(&ds).iter().all(|&(d, _)| seen[d] && plan.mask[d]);
        let expected_terms: usize = (0..k).filter(|&d| seen[d] && plan.mask[d]).map(|d| ds.items(u, d).len()).sum();
        if !(unseen_masked && masked_seen >= 1 && unmasked_seen >= 1 && terms_ok)
            || ex.loss_terms(&ds).len() != expected_terms
        {
            violations += 1;
        }
        let raw = adaptive_probabilities_unclamped(&seen, &prefs, rho);
        let s: Vec<f64> = (0..k).filter(|&d| seen[d]).map(|d| raw[d]).collect();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        worst_mean_gap = worst_mean_gap.max((mean - rho).abs());
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && worst_mean_gap <= 0.02 && elapsed < Duration::from_secs(20);
    verdict(
        3,
        "masking invariants",
        pass,
        &format!(
            "10000 plans, {violations} violations, max |mean p - rho| {worst_mean_gap:.2e} (<= 0.02), {elapsed:.2?} (< 20s)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_schedule_exactness() {
    let cfg = TrainConfig::default();
    let values = [cfg.epsilon(0), cfg.epsilon(250), cfg.epsilon(1000)];
    let pass = values == [1.0, 0.5, 0.5] && epsilon_schedule(250, 0.5, 0.002) == 0.5;
    verdict(4, "schedule exactness", pass, &format!("eps(0, 250, 1000) = {values:?}"));
    assert!(pass);
}

#[test]
fn criterion_5_permutation_property() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let k = rng.random_range(2..=6);
        let width = 8;
        let model = perturbed_model(
            ModelConfig {
                width,
                layers: 2,
                heads: 2,
                ..ModelConfig::new(k, 4)
            },
            trial,
            0.5,
        );
        let h0 = random_matrix(k + 1, width, 1.0, &mut rng);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let mut permuted = h0.clone();
        for (dst, &src) in perm.iter().enumerate() {
            permuted.row_mut(dst + 1).copy_from_slice(h0.row(src + 1));
        }
        let a = model.view().forward::<ChaCha8Rng>(&h0, None).unwrap();
        let b = model.view().forward::<ChaCha8Rng>(&permuted, None).unwrap();
        for c in 0..width {
            worst = worst.max((a.output.row(0)[c] - b.output.row(0)[c]).abs());
        }
        for (dst, &src) in perm.iter().enumerate() {
            for c in 0..width {
                worst = worst.max((a.output.row(src + 1)[c] - b.output.row(dst + 1)[c]).abs());
            }
        }
    }
    let pass = worst < 1e-9;
    verdict(5, "permutation property", pass, &format!("100 trials, max abs deviation {worst:.2e} (< 1e-9)"));
    assert!(pass);
}

struct ScoreTable {
    mt: Vec<Vec<f64>>,
    st: Vec<Vec<f64>>,
}

impl Recommender for ScoreTable {
    fn num_domains(&self) -> usize {
        self.mt.len()
    }

    fn mt_scores(&self, _user: usize, seen: &[bool]) -> Result<Vec<(usize, Vec<f64>)>, InferenceError> {
        Ok(unseen_domains(seen).into_iter().map(|k| (k, self.mt[k].clone())).collect())
    }

    fn st_scores(&self, _user: usize, _seen: &[bool], domain: usize) -> Result<Vec<f64>, InferenceError> {
        Ok(self.st[domain].clone())
    }
}

/// Enumerate, sort by (score desc, domain, item), truncate.
fn naive_ranking(scores: &[(usize, Vec<f64>)], n: usize) -> Vec<(usize, usize, f64)> {
    let mut all: Vec<(usize, usize, f64)> = scores
        .iter()
        .flat_map(|(k, s)| s.iter().enumerate().map(move |(v, &x)| (*k, v, x)))
        .collect();
    all.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    all.truncate(n);
    all
}

fn brute_recall(list: &[(usize, usize)], truth: &[(usize, usize)], k: usize) -> f64 {
    let mut hits = 0.0;
    for x in list.iter().take(k) {
        if truth.contains(x) {
            hits += 1.0;
        }
    }
    hits / truth.len() as f64
}

fn brute_ndcg(list: &[(usize, usize)], truth: &[(usize, usize)], k: usize) -> f64 {
    let mut dcg = 0.0;
    for (i, x) in list.iter().take(k).enumerate() {
        if truth.contains(x) {
            dcg += 1.0 / ((i + 2) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for i in 0..truth.len().min(k) {
        idcg += 1.0 / ((i + 2) as f64).log2();
    }
    dcg / idcg
}

fn brute_kld(list: &[(usize, usize)], p: &[f64], support: &[usize], k: usize) -> f64 {
    let top = &list[..k.min(list.len())];
    let mut q = Vec::new();
    for &d in support {
        let c = top.iter().filter(|x| x.0 == d).count() as f64;
        q.push(c / top.len() as f64 + KLD_SMOOTHING);
    }
    let z: f64 = q.iter().sum();
    let mut total = 0.0;
    for (pi, qi) in p.iter().zip(&q) {
        if *pi > 0.0 {
            total += pi * (pi / (qi / z)).ln();
        }
    }
    total
}

#[test]
fn criterion_6_ranking_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut list_mismatches = 0;
    let mut worst_metric: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(2..=4);
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(1..=50)).collect();
        // coarse scores force ties
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| (rng.random_range(0..20) as f64) / 7.0).collect() };
        let table = ScoreTable {
            mt: sizes.iter().map(|&n| draw(n)).collect(),
            st: sizes.iter().map(|&n| draw(n)).collect(),
        };
        let mut seen: Vec<bool> = (0..k).map(|_| rng.random_bool(0.5)).collect();
        let hole = rng.random_range(0..k);
        seen[hole] = false;
        let n = rng.random_range(1..=60);

        let got = recommend_mt(&table, 0, &seen, n).unwrap();
        let want = naive_ranking(&table.mt_scores(0, &seen).unwrap(), n);
        let got_triples: Vec<_> = got.entries.iter().map(|e| (e.domain, e.item, e.score)).collect();
        if got_triples != want {
            list_mismatches += 1;
        }
        let st = recommend_st(&table, 0, &seen, hole, n).unwrap();
        let want_st = naive_ranking(&[(hole, table.st[hole].clone())], n);
        if st.entries.iter().map(|e| (e.domain, e.item, e.score)).collect::<Vec<_>>() != want_st {
            list_mismatches += 1;
        }

        let keys: Vec<(usize, usize)> = got.keys().collect();
        let support = unseen_domains(&seen);
        let mut truth: Vec<(usize, usize)> = Vec::new();
        for &d in &support {
            for v in 0..sizes[d] {
                if rng.random_bool(0.2) {
                    truth.push((d, v));
                }
            }
        }
        if truth.is_empty() {
            truth.push((hole, 0));
        }
        let truth_set: HashSet<(usize, usize)> = truth.iter().copied().collect();
        let mut p: Vec<f64> = support.iter().map(|&d| truth.iter().filter(|x| x.0 == d).count() as f64).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        for cutoff in [1, 5, 20, 50] {
            worst_metric = worst_metric
                .max((recall_at_k(&keys, &truth_set, cutoff).unwrap() - brute_recall(&keys, &truth, cutoff)).abs())
                .max((ndcg_at_k(&keys, &truth_set, cutoff).unwrap() - brute_ndcg(&keys, &truth, cutoff)).abs())
                .max((kld_at_k(&keys, &p, &support, cutoff).unwrap() - brute_kld(&keys, &p, &support, cutoff)).abs());
        }
    }
    let pass = list_mismatches == 0 && worst_metric <= 1e-12;
    verdict(
        6,
        "ranking oracle",
        pass,
        &format!("100 instances, {list_mismatches} list mismatches, max metric deviation {worst_metric:.2e} (<= 1e-12)"),
    );
    assert!(pass);
}

const BENCH_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn bench_encoder_config(seed: u64) -> BprConfig {
    BprConfig {
        dim: 32,
        epochs: 30,
        lr: 0.005,
        seed,
        ..Default::default()
    }
}

fn bench_drip_config(seed: u64) -> TrainConfig {
    TrainConfig {
        width: 32,
        layers: 1,
        heads: 2,
        epochs: 40,
        lr: 5e-3,
        batch_size: 128,
        seed,
        ..Default::default()
    }
}

fn bench_single_config(seed: u64) -> SingleDomainConfig {
    SingleDomainConfig {
        dim: 32,
        epochs: 60,
        lr: 2e-3,
        seed,
        ..Default::default()
    }
}

fn bench_split(seed: u64) -> EvaluationSplit {
    let data = generate_synthetic(&SyntheticConfig::benchmark(seed)).unwrap();
    make_mdrau_split(&data.dataset, 0.3, 0.5, seed).unwrap()
}

#[test]
fn criterion_7_synthetic_recovery() {
    let _g = serial();
    let start = Instant::now();
    let opts = EvalOptions::default();
    let n = BENCH_SEEDS.len() as f64;
    let (mut drip_r, mut drip_kld, mut single_r, mut uniform_kld, mut m2o_r) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for seed in BENCH_SEEDS {
        let split = bench_split(seed);
        let encoders = train_all_encoders(&split.train, &bench_encoder_config(seed)).unwrap();
        let cfg = bench_drip_config(seed);
        let model = train(&split, &encoders, &cfg, MaskPolicy::Scheduled).unwrap().model;
        let drip = evaluate(&split, &DripRecommender::new(&model, &encoders), EvalMode::MultiTarget, &opts).unwrap();
        let uniform_rec = DripRecommender::new(&model, &encoders)
            .with_weights(fixed_weights(VariantKind::FixedUniform, &split).unwrap());
        let uniform = evaluate(&split, &uniform_rec, EvalMode::MultiTarget, &opts).unwrap();
        let (single_model, _) = train_single_domain(&split, &bench_single_config(seed)).unwrap();
        let single = evaluate(&split, &single_model, EvalMode::MultiTarget, &opts).unwrap();
        let (m2o, _) = train_many_to_one(&split, &encoders, &cfg, PostProcessing::A).unwrap();
        let m2o_rec = ManyToOneRecommender { inner: &m2o, encoders: &encoders };
        let many = evaluate(&split, &m2o_rec, EvalMode::MultiTarget, &opts).unwrap();
        println!(
            "  seed {seed}: drip R@20 {:.4} KLD@20 {:.4} | single R@20 {:.4} | uniform KLD@20 {:.4} | many-to-one A R@20 {:.4}",
            drip.recall_at(20).unwrap(),
            drip.kld_at(20).unwrap(),
            single.recall_at(20).unwrap(),
            uniform.kld_at(20).unwrap(),
            many.recall_at(20).unwrap()
        );
        drip_r += drip.recall_at(20).unwrap() / n;
        drip_kld += drip.kld_at(20).unwrap() / n;
        single_r += single.recall_at(20).unwrap() / n;
        uniform_kld += uniform.kld_at(20).unwrap() / n;
        m2o_r += many.recall_at(20).unwrap() / n;
    }
    let elapsed = start.elapsed();
    let checks = [
        (drip_r >= 1.2 * single_r, format!("drip R@20 {drip_r:.4} >= 1.2 x single {single_r:.4} ({:.4})", 1.2 * single_r)),
        (drip_kld < uniform_kld, format!("drip KLD@20 {drip_kld:.4} < uniform {uniform_kld:.4}")),
        (drip_r >= m2o_r, format!("drip R@20 {drip_r:.4} >= many-to-one A {m2o_r:.4}")),
        (elapsed < Duration::from_secs(1800), format!("{elapsed:.2?} (< 30 min)")),
    ];
    let pass = checks.iter().all(|c| c.0);
    let detail: Vec<String> = checks
        .iter()
        .map(|(ok, s)| format!("{} {s}", if *ok { "ok" } else { "MISS" }))
        .collect();
    verdict(7, "synthetic recovery", pass, &detail.join("; "));
    assert!(pass);
}

fn tiny_run(seed: u64, dir: &std::path::Path) -> (String, Vec<u8>, Vec<u8>, Vec<(String, String)>) {
    let data = generate_synthetic(&SyntheticConfig::tiny(seed)).unwrap();
    let split = make_mdrau_split(&data.dataset, 0.3, 0.5, seed).unwrap();
    let encoders = train_all_encoders(
        &split.train,
        &BprConfig {
            dim: 8,
            epochs: 5,
            seed,
            ..Default::default()
        },
    )
    .unwrap();
    let cfg = TrainConfig {
        width: 8,
        layers: 1,
        heads: 2,
        epochs: 3,
        batch_size: 16,
        seed,
        ..Default::default()
    };
    let model = train(&split, &encoders, &cfg, MaskPolicy::Scheduled).unwrap().model;
    let (epath, mpath) = (dir.join("encoder.ckpt"), dir.join("model.ckpt"));
    encoders[0].save(&epath, &Metadata::new()).unwrap();
    model.save(&mpath, &Metadata::new()).unwrap();
    let report = drip_core::evaluation::evaluate_all(
        &split,
        &DripRecommender::new(&model, &encoders),
        &EvalOptions::default(),
    )
    .unwrap();
    (
        split.manifest().to_json(),
        std::fs::read(epath).unwrap(),
        std::fs::read(mpath).unwrap(),
        report.to_records(),
    )
}

#[test]
fn criterion_8_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let first = tiny_run(11, &a);
    let second = tiny_run(11, &b);
    let same = [
        ("split manifest", first.0 == second.0),
        ("encoder checkpoint", first.1 == second.1),
        ("model checkpoint", first.2 == second.2),
        ("metric records", first.3 == second.3),
    ];
    let other = tiny_run(12, &a);
    let pass = same.iter().all(|s| s.1) && other.0 != first.0;
    let detail: Vec<String> = same.iter().map(|(n, ok)| format!("{n} {}", if *ok { "identical" } else { "DIFFERS" })).collect();
    verdict(8, "determinism", pass, &detail.join(", "));
    assert!(pass);
}

#[test]
fn criterion_9_st_mt_consistency() {
    let _g = serial();
    let seed = 0;
    let split = bench_split(seed);
    let encoders = train_all_encoders(&split.train, &bench_encoder_config(seed)).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        ..bench_drip_config(seed)
    };
    let model = train(&split, &encoders, &cfg, MaskPolicy::Scheduled).unwrap().model;
    let rec = DripRecommender::new(&model, &encoders);
    let ds = &split.train;
    let (mut checked, mut mismatches) = (0, 0);
    for u in 0..ds.num_users() {
        let seen = ds.seen_row(u);
        let unseen = unseen_domains(seen);
        if unseen.len() != 1 {
            continue;
        }
        let n = ds.num_items(unseen[0]);
        let mt: Vec<_> = recommend_mt(&rec, u, seen, n).unwrap().keys().collect();
        let st: Vec<_> = recommend_st(&rec, u, seen, unseen[0], n).unwrap().keys().collect();
        checked += 1;
        if mt != st {
            mismatches += 1;
        }
    }
    let pass = checked > 0 && mismatches == 0;
    verdict(
        9,
        "ST/MT consistency",
        pass,
        &format!("{checked} users with one unseen domain, full rankings compared, {mismatches} mismatches"),
    );
    assert!(pass);
}
