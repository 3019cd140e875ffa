use std::collections::BTreeMap;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use psma_io::{fs, CohortFile, IoError, ModelConfig, SampleStore};
use psma_sampler::{AcceptanceRate, ChainConfig, Sampler};

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    fn is_active(self) -> bool {
        matches!(self, Self::Queued | Self::Running)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub iteration: u64,
    pub of: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitJob {
    pub id: String,
    pub cohort: String,
    pub state: JobState,
    pub progress: Progress,
    /// Store path relative to the data directory, once published.
    pub result: Option<String>,
    /// Retained draws, once done.
    pub draws: Option<usize>,
    #[serde(default)]
    pub acceptance: Vec<AcceptanceRate>,
    pub error: Option<String>,
}

/// Body of `POST /fits`; unset chain fields take the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    pub cohort: String,
    pub iterations: Option<u64>,
    pub burn_in: Option<u64>,
    pub thinning: Option<u64>,
    pub seed: Option<u64>,
    pub parallel: Option<bool>,
    pub model: Option<ModelConfig>,
}

impl FitRequest {
    pub fn chain_config(&self) -> ChainConfig {
        let d = ChainConfig::default();
        ChainConfig {
            iterations: self.iterations.unwrap_or(d.iterations),
            burn_in: self.burn_in.unwrap_or(d.burn_in),
            thinning: self.thinning.unwrap_or(d.thinning),
            seed: self.seed.unwrap_or(d.seed),
            parallel: self.parallel.unwrap_or(d.parallel),
            ..d
        }
    }
}

/// A completed fit; never mutated after publication.
#[derive(Debug)]
pub struct PublishedFit {
    pub job: String,
    pub store: SampleStore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub id: String,
    pub patients: Vec<String>,
    pub has_truth: bool,
    /// Job whose store answers decision queries for this cohort.
    pub fit: Option<String>,
}

struct Job {
    info: Mutex<FitJob>,
    iteration: AtomicU64,
    cancel: AtomicBool,
}

impl Job {
    fn snapshot(&self) -> FitJob {
        let mut out = self.info.lock().unwrap().clone();
        out.progress.iteration = self.iteration.load(Ordering::SeqCst);
        out
    }
}

struct Inner {
    data_dir: Option<PathBuf>,
    cohorts: RwLock<BTreeMap<String, Arc<CohortFile>>>,
    jobs: RwLock<BTreeMap<String, Arc<Job>>>,
    fits: RwLock<BTreeMap<String, Arc<PublishedFit>>>,
    next_job: AtomicU64,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn job_number(id: &str) -> Option<u64> {
    id.strip_prefix("fit-")?.parse().ok()
}

impl AppState {
    /// State kept in memory only.
    pub fn in_memory() -> Self {
        Self::with_dir(None)
    }

    fn with_dir(data_dir: Option<PathBuf>) -> Self {
        Self {
            inner: Arc::new(Inner {
                data_dir,
                cohorts: RwLock::default(),
                jobs: RwLock::default(),
                fits: RwLock::default(),
                next_job: AtomicU64::new(1),
            }),
        }
    }

    /// Opens (or creates) a data directory and reloads the cohorts and
    /// completed fits stored there.
    pub fn open(data_dir: Option<PathBuf>) -> Result<Self, IoError> {
        let Some(dir) = data_dir else { return Ok(Self::in_memory()) };
        for sub in ["cohorts", "fits"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| IoError::io(&p, e))?;
        }
        let state = Self::with_dir(Some(dir.clone()));
        for path in sorted_entries(&dir.join("cohorts"), "json")? {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let cohort = CohortFile::read(&path)?;
            state.inner.cohorts.write().unwrap().insert(id, Arc::new(cohort));
        }
        let mut max_job = 0;
        for path in sorted_entries(&dir.join("fits"), "json")? {
            let bytes = fs::read(&path)?;
            let job: FitJob = serde_json::from_slice(&bytes).map_err(|e| IoError::schema(path.display().to_string(), e.to_string()))?;
            max_job = max_job.max(job_number(&job.id).unwrap_or(0));
            if job.state != JobState::Done {
                continue;
            }
            let store = SampleStore::read(&dir.join("fits").join(format!("{}.bin", job.id)))?;
            state.publish(&job.cohort, PublishedFit { job: job.id.clone(), store });
            let iteration = AtomicU64::new(job.progress.iteration);
            let handle = Job { info: Mutex::new(job.clone()), iteration, cancel: AtomicBool::new(false) };
            state.inner.jobs.write().unwrap().insert(job.id.clone(), Arc::new(handle));
        }
        state.inner.next_job.store(max_job + 1, Ordering::SeqCst);
        Ok(state)
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.inner.data_dir.as_deref()
    }

    /// Registers a cohort. Re-sending identical content under the same id
    /// succeeds without change (`false`); different content conflicts.
    pub fn add_cohort(&self, id: Option<String>, cohort: CohortFile) -> Result<(String, bool), ApiError> {
        let text = cohort.to_json_string();
        let id = match id {
            Some(id) if valid_id(&id) => id,
            Some(id) => return Err(ApiError::invalid(format!("cohort id {id:?} must be 1-64 of [A-Za-z0-9_-]"))),
            None => {
                let digest = Sha256::digest(text.as_bytes());
                let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
                format!("c-{hex}")
            }
        };
        let mut cohorts = self.inner.cohorts.write().unwrap();
        if let Some(existing) = cohorts.get(&id) {
            return if **existing == cohort {
                Ok((id, false))
            } else {
                Err(ApiError::conflict(format!("cohort {id} already exists with different content")))
            };
        }
        if let Some(dir) = &self.inner.data_dir {
            fs::write_atomic(&dir.join("cohorts").join(format!("{id}.json")), text.as_bytes())?;
        }
        cohorts.insert(id.clone(), Arc::new(cohort));
        Ok((id, true))
    }

    pub fn cohort(&self, id: &str) -> Result<Arc<CohortFile>, ApiError> {
        self.inner
            .cohorts
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown cohort {id}")))
    }

    pub fn cohort_summary(&self, id: &str) -> Result<CohortSummary, ApiError> {
        let cohort = self.cohort(id)?;
        Ok(CohortSummary {
            id: id.to_string(),
            patients: cohort.ids(),
            has_truth: cohort.truth.is_some(),
            fit: self.published(id).map(|f| f.job.clone()),
        })
    }

    fn published(&self, cohort: &str) -> Option<Arc<PublishedFit>> {
        self.inner.fits.read().unwrap().get(cohort).cloned()
    }

    fn publish(&self, cohort: &str, fit: PublishedFit) {
        self.inner.fits.write().unwrap().insert(cohort.to_string(), Arc::new(fit));
    }

    /// Validates the request and queues the chain on the blocking pool.
    pub fn start_fit(&self, req: FitRequest) -> Result<FitJob, ApiError> {
        let cohort = self.cohort(&req.cohort)?;
        let model = req.model.clone().unwrap_or_default();
        model.validate()?;
        let records = cohort.records(&model)?;
        let cfg = req.chain_config();
        cfg.validate()?;

        let mut jobs = self.inner.jobs.write().unwrap();
        let busy = jobs.values().any(|j| {
            let info = j.info.lock().unwrap();
            info.cohort == req.cohort && info.state.is_active()
        });
        if busy {
            return Err(ApiError::conflict(format!("a fit for cohort {} is already running", req.cohort)));
        }
        let id = format!("fit-{:04}", self.inner.next_job.fetch_add(1, Ordering::SeqCst));
        let info = FitJob {
            id: id.clone(),
            cohort: req.cohort.clone(),
            state: JobState::Queued,
            progress: Progress { iteration: 0, of: cfg.iterations },
            result: None,
            draws: None,
            acceptance: Vec::new(),
            error: None,
        };
        let job = Arc::new(Job { info: Mutex::new(info), iteration: AtomicU64::new(0), cancel: AtomicBool::new(false) });
        jobs.insert(id, job.clone());
        drop(jobs);

        let snapshot = job.snapshot();
        let state = self.clone();
        tokio::task::spawn_blocking(move || state.run_job(&job, &records, cfg, model));
        Ok(snapshot)
    }

    fn run_job(&self, job: &Job, records: &[psma_core::PatientRecord<f64>], cfg: ChainConfig, model: ModelConfig) {
        let outcome = self.run_chain(job, records, cfg, model);
        let mut info = job.info.lock().unwrap();
        if info.state == JobState::Failed {
            return; // cancelled while running
        }
        match outcome {
            Ok((fit, path)) => {
                job.iteration.store(cfg.iterations, Ordering::SeqCst);
                info.state = JobState::Done;
                info.progress.iteration = cfg.iterations;
                info.draws = Some(fit.store.samples.len());
                info.acceptance = fit.store.header.acceptance.clone();
                info.result = path;
                if let Some(dir) = &self.inner.data_dir {
                    let record = serde_json::to_vec_pretty(&*info).expect("job record serializes");
                    if let Err(e) = fs::write_atomic(&dir.join("fits").join(format!("{}.json", info.id)), &record) {
                        tracing::warn!(error = %e, "could not persist job record");
                    }
                }
                self.publish(&info.cohort, fit);
            }
            Err(e) => {
                info.state = JobState::Failed;
                info.error = Some(e);
            }
        }
    }

    fn run_chain(
        &self,
        job: &Job,
        records: &[psma_core::PatientRecord<f64>],
        cfg: ChainConfig,
        model: ModelConfig,
    ) -> Result<(PublishedFit, Option<String>), String> {
        {
            let mut info = job.info.lock().unwrap();
            if info.state != JobState::Queued {
                return Err("cancelled".into());
            }
            info.state = JobState::Running;
        }
        let mut sampler = Sampler::new(cfg, records, model.spec()).map_err(|e| e.to_string())?;
        let every = (cfg.iterations / 200).max(1);
        sampler
            .run(every, |s| {
                job.iteration.store(s.iteration(), Ordering::SeqCst);
                if job.cancel.load(Ordering::SeqCst) {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            })
            .map_err(|e| e.to_string())?;
        let store = SampleStore::from_sampler(sampler, model).map_err(|e| e.to_string())?;
        let id = job.info.lock().unwrap().id.clone();
        let path = match &self.inner.data_dir {
            Some(dir) => {
                let rel = format!("fits/{id}.bin");
                store.write(&dir.join(&rel)).map_err(|e| e.to_string())?;
                Some(rel)
            }
            None => None,
        };
        Ok((PublishedFit { job: id, store }, path))
    }

    pub fn job(&self, id: &str) -> Result<FitJob, ApiError> {
        let jobs = self.inner.jobs.read().unwrap();
        let job = jobs.get(id).ok_or_else(|| ApiError::not_found(format!("unknown fit {id}")))?;
        Ok(job.snapshot())
    }

    /// Stops a queued or running job, which then reports `failed`.
    pub fn cancel(&self, id: &str) -> Result<FitJob, ApiError> {
        let job = self
            .inner
            .jobs
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown fit {id}")))?;
        {
            let mut info = job.info.lock().unwrap();
            match info.state {
                JobState::Done => return Err(ApiError::conflict(format!("fit {id} has already completed"))),
                JobState::Failed => {}
                JobState::Queued | JobState::Running => {
                    job.cancel.store(true, Ordering::SeqCst);
                    info.state = JobState::Failed;
                    info.error = Some("cancelled".into());
                }
            }
        }
        Ok(job.snapshot())
    }

    /// Cohort and published fit answering queries about `pid`. Without an
    /// explicit cohort the patient id must belong to exactly one fitted
    /// cohort.
    pub fn fit_for_patient(
        &self,
        cohort: Option<&str>,
        pid: &str,
    ) -> Result<(Arc<CohortFile>, Arc<PublishedFit>), ApiError> {
        let no_fit = || ApiError::conflict(format!("no completed fit covers patient {pid}"));
        if let Some(c) = cohort {
            let file = self.cohort(c)?;
            if file.patient(pid).is_none() {
                return Err(ApiError::not_found(format!("unknown patient {pid}")));
            }
            return Ok((file, self.published(c).ok_or_else(no_fit)?));
        }
        let holders: Vec<(String, Arc<CohortFile>)> = self
            .inner
            .cohorts
            .read()
            .unwrap()
            .iter()
            .filter(|(_, f)| f.patient(pid).is_some())
            .map(|(id, f)| (id.clone(), f.clone()))
            .collect();
        if holders.is_empty() {
            return Err(ApiError::not_found(format!("unknown patient {pid}")));
        }
        let mut fitted: Vec<_> = holders.into_iter().filter_map(|(id, f)| self.published(&id).map(|p| (f, p))).collect();
        match fitted.len() {
            0 => Err(no_fit()),
            1 => Ok(fitted.pop().unwrap()),
            _ => Err(ApiError::invalid(format!("patient {pid} is in several fitted cohorts; name the cohort"))),
        }
    }
}

fn sorted_entries(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, IoError> {
    let rd = std::fs::read_dir(dir).map_err(|e| IoError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let path = entry.map_err(|e| IoError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
