//! Subcommand implementations. Each stage reads the previous stage's
//! artifacts from the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use drip_core::data::{
    apply_manifest, filter_dataset, generate_synthetic, load_interactions, make_mdrau_split,
    write_interactions, EvaluationSplit, InteractionDataset, SplitManifest, SyntheticConfig,
};
use drip_core::encoder::{train_all_encoders, DomainEncoder};
use drip_core::evaluation::{evaluate_all, EvalOptions, EvaluationReport};
use drip_core::inference::{recommend_mt, write_recommendations, DripRecommender};
use drip_core::model::DripModel;
use drip_core::numerics::Metadata;
use drip_core::training::{train, EpochRecord, MaskPolicy, VALIDATION_CUTOFF};
use drip_core::variants::{run_variant, VariantKind};

use crate::config::ExperimentConfig;
use crate::report::{emit_records, emit_report, read_file, stamp, write_file};
use crate::CliError;

pub const INTERACTIONS: &str = "interactions.tsv";
pub const DATASET: &str = "dataset.tsv";
pub const SPLIT: &str = "split.json";
pub const ENCODER_DIR: &str = "encoders";
pub const CHECKPOINT: &str = "drip.ckpt";
pub const TRAIN_LOG: &str = "train_log.tsv";
pub const METRICS: &str = "metrics.tsv";
pub const METRICS_TEXT: &str = "metrics.txt";
pub const RECOMMENDATIONS: &str = "recommendations.tsv";

/// A seeded config bound to its output directory.
pub struct Run {
    cfg: ExperimentConfig,
    seed: u64,
    hash: String,
}

impl Run {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, CliError> {
        let cfg = cfg.seeded()?;
        let seed = cfg.seed()?;
        let hash = cfg.hash();
        Ok(Self { cfg, seed, hash })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn encoder_path(&self, k: usize) -> PathBuf {
        self.cfg.out_dir.join(ENCODER_DIR).join(format!("domain_{k}.ckpt"))
    }

    fn metadata(&self) -> Metadata {
        Metadata::from([
            ("config_hash".to_string(), self.hash.clone()),
            ("seed".to_string(), self.seed.to_string()),
        ])
    }

    fn tsv(&self, ds: &InteractionDataset) -> String {
        let mut buf = stamp(&self.hash, self.seed).into_bytes();
        write_interactions(&mut buf, ds).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 ids")
    }

    fn done(&self, path: &Path) {
        eprintln!("wrote {}", path.display());
    }

    pub fn gen_synthetic(&self) -> Result<(), CliError> {
        let syn = match self.cfg.synthetic.as_str() {
            "benchmark" => SyntheticConfig::benchmark(self.seed),
            _ => SyntheticConfig::tiny(self.seed),
        };
        let data = generate_synthetic(&syn)?;
        let path = self.path(INTERACTIONS);
        write_file(&path, &self.tsv(&data.dataset))?;
        self.done(&path);
        Ok(())
    }

    fn source(&self) -> Result<InteractionDataset, CliError> {
        let path = match &self.cfg.data {
            Some(p) => p.clone(),
            None => self.path(INTERACTIONS),
        };
        if !path.exists() {
            return Err(CliError::MissingArtifact {
                path,
                stage: "gen-synthetic",
            });
        }
        Ok(load_interactions(&path)?)
    }

    pub fn split(&self) -> Result<(), CliError> {
        let ds = filter_dataset(&self.source()?, self.cfg.min_overlap, self.cfg.min_single)?;
        let split = make_mdrau_split(&ds, self.cfg.hide_prob, self.cfg.val_fraction, self.seed)?;
        let mut manifest = split.manifest();
        manifest.tags = self.metadata();
        let (dpath, spath) = (self.path(DATASET), self.path(SPLIT));
        write_file(&dpath, &self.tsv(&ds))?;
        write_file(&spath, &manifest.to_json())?;
        self.done(&dpath);
        self.done(&spath);
        Ok(())
    }

    fn load_split(&self) -> Result<EvaluationSplit, CliError> {
        let text = read_file(&self.path(SPLIT), "split")?;
        let manifest = SplitManifest::from_json(&text)?;
        read_file(&self.path(DATASET), "split")?;
        let ds = load_interactions(self.path(DATASET))?;
        Ok(apply_manifest(&ds, &manifest)?)
    }

    pub fn train_encoders(&self) -> Result<(), CliError> {
        let split = self.load_split()?;
        let encoders = train_all_encoders(&split.train, &self.cfg.encoder)?;
        let meta = self.metadata();
        let dir = self.cfg.out_dir.join(ENCODER_DIR);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Io { path: dir, source: e })?;
        for (k, enc) in encoders.iter().enumerate() {
            let path = self.encoder_path(k);
            enc.save(&path, &meta)?;
            self.done(&path);
        }
        Ok(())
    }

    fn load_encoders(&self, k: usize) -> Result<Vec<DomainEncoder>, CliError> {
        (0..k)
            .map(|d| {
                let path = self.encoder_path(d);
                if !path.exists() {
                    return Err(CliError::MissingArtifact {
                        path,
                        stage: "train-encoders",
                    });
                }
                Ok(DomainEncoder::load(&path)?)
            })
            .collect()
    }

    fn train_log(&self, log: &[EpochRecord]) -> String {
        let mut s = stamp(&self.hash, self.seed);
        let _ = writeln!(s, "epoch\tepsilon\ttrain_loss\tval_recall@{VALIDATION_CUTOFF}");
        for r in log {
            let _ = writeln!(s, "{}\t{:?}\t{:?}\t{:?}", r.epoch, r.epsilon, r.train_loss, r.val_recall);
        }
        s
    }

    pub fn train_drip(&self) -> Result<(), CliError> {
        let split = self.load_split()?;
        let encoders = self.load_encoders(split.train.num_domains())?;
        let outcome = train(&split, &encoders, &self.cfg.train, MaskPolicy::Scheduled)?;
        let (cpath, lpath) = (self.path(CHECKPOINT), self.path(TRAIN_LOG));
        write_file(&lpath, &self.train_log(&outcome.log))?;
        let mut meta = self.metadata();
        meta.insert("best_epoch".into(), outcome.best_epoch.to_string());
        outcome.model.save(&cpath, &meta)?;
        self.done(&lpath);
        self.done(&cpath);
        Ok(())
    }

    fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            cutoffs: self.cfg.cutoffs.clone(),
            kld_reference: self.cfg.kld_reference,
            ..Default::default()
        }
    }

    fn write_metrics(&self, dir: &Path, report: &EvaluationReport) -> Result<(), CliError> {
        let (mpath, tpath) = (dir.join(METRICS), dir.join(METRICS_TEXT));
        write_file(&mpath, &emit_records(report, &self.hash, self.seed))?;
        write_file(&tpath, &format!("{}\n{}", stamp(&self.hash, self.seed), report.to_text()))?;
        self.done(&mpath);
        self.done(&tpath);
        Ok(())
    }

    fn load_model(&self) -> Result<DripModel, CliError> {
        let path = self.path(CHECKPOINT);
        if !path.exists() {
            return Err(CliError::MissingArtifact {
                path,
                stage: "train-drip",
            });
        }
        Ok(DripModel::load(&path)?.0)
    }

    /// Evaluates the trained model and returns its report.
    pub fn evaluate_report(&self) -> Result<EvaluationReport, CliError> {
        let split = self.load_split()?;
        let encoders = self.load_encoders(split.train.num_domains())?;
        let model = self.load_model()?;
        let rec = DripRecommender::new(&model, &encoders);
        let report = evaluate_all(&split, &rec, &self.eval_options())?;
        self.write_metrics(&self.cfg.out_dir, &report)?;

        let depth = self.cfg.cutoffs.iter().copied().max().unwrap_or(VALIDATION_CUTOFF);
        let mut buf = stamp(&self.hash, self.seed).into_bytes();
        buf.extend_from_slice(b"user\trank\titem\tdomain\tscore\n");
        for &u in &split.test_users {
            let list = recommend_mt(&rec, u, split.train.seen_row(u), depth)?;
            write_recommendations(&mut buf, &split.train, u, &list).expect("writing to memory");
        }
        let rpath = self.path(RECOMMENDATIONS);
        write_file(&rpath, &String::from_utf8(buf).expect("utf-8 ids"))?;
        self.done(&rpath);
        Ok(report)
    }

    pub fn evaluate(&self) -> Result<(), CliError> {
        let report = self.evaluate_report()?;
        print!("{}", report.to_text());
        Ok(())
    }

    pub fn ablate(&self, kind: VariantKind) -> Result<(), CliError> {
        let split = self.load_split()?;
        let encoders = self.load_encoders(split.train.num_domains())?;
        let drip = if kind.reuses_drip() && self.path(CHECKPOINT).exists() {
            Some(self.load_model()?)
        } else {
            None
        };
        let trained = run_variant(
            kind,
            &split,
            &encoders,
            &self.cfg.train,
            &self.cfg.single_domain(),
            drip.as_ref(),
        )?;
        let rec = trained.recommender(&encoders);
        let report = evaluate_all(&split, rec.as_ref(), &self.eval_options())?;
        self.write_metrics(&self.cfg.out_dir.join(format!("ablate_{kind}")), &report)?;
        print!("{}", report.to_text());
        Ok(())
    }

    /// Full pipeline from `split` onward, once per grid value, each in
    /// `sweep_<param>/<value>/`.
    pub fn sweep(&self, param: &str, grid: &[String], metric: &str) -> Result<(), CliError> {
        if param == "seed" || param == "out_dir" {
            return Err(CliError::Usage(format!("cannot sweep `{param}`")));
        }
        let root = self.cfg.out_dir.join(format!("sweep_{param}"));
        let source = match &self.cfg.data {
            Some(p) => p.clone(),
            None => self.path(INTERACTIONS),
        };
        let mut reports = Vec::new();
        for value in grid {
            let mut cfg = self.cfg.clone();
            cfg.set(param, value)?;
            cfg.data = Some(source.clone());
            cfg.out_dir = root.join(value);
            let point = Run::new(cfg)?;
            point.split()?;
            point.train_encoders()?;
            point.train_drip()?;
            reports.push((value.clone(), point.evaluate_report()?));
        }
        emit_report(&reports, param, metric, &root, &self.hash, self.seed)?;
        self.done(&root.join("table.tsv"));
        Ok(())
    }
}
