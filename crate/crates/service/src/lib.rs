//! HTTP JSON API for annotation sessions: serve pairs of backlog items,
//! record which one needs more effort, train a comparative model on the
//! judgments and rank the backlog with it.
//!
//! | method | path                         |                                  |
//! |--------|------------------------------|----------------------------------|
//! | GET    | `/datasets`                  | loaded backlogs                  |
//! | POST   | `/sessions`                  | `{dataset, k, seed}`             |
//! | GET    | `/sessions/{id}`             | status and progress              |
//! | GET    | `/sessions/{id}/next-pair`   | earliest unjudged pair, or done  |
//! | POST   | `/sessions/{id}/judgments`   | `{pair_index, choice, annotator}`|
//! | POST   | `/sessions/{id}/skip`        | `{pair_index}`                   |
//! | POST   | `/sessions/{id}/train`       | `{config}` (optional)            |
//! | GET    | `/sessions/{id}/ranking`     | scored backlog                   |
//! | POST   | `/sessions/{id}/ranking`     | `{new_items}` scored alongside   |

pub mod error;
pub mod session;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use storypoint_core::dataset::{item_text, load_project, BacklogItem, DataFormat, ProjectDataset, Split};
use storypoint_core::features::{fit_hashed_tfidf, EmbeddingMatrix, HashedTfidfModel, DEFAULT_DIM};
use storypoint_core::harness::TrainOverrides;
use storypoint_core::models::{score, train_comparative, EpochRecord, TrainConfig};
use storypoint_core::pairing::generate_annotation_pairs;
use tokio::sync::Mutex;

pub use error::{ApiError, ApiResult, ErrorBody};
use session::{now_ms, replay, Choice, Journal, JournalRecord, JudgmentRecord, SessionState, Status};

pub const DEFAULT_TRAIN_TIMEOUT: Duration = Duration::from_secs(60);

/// A backlog with its featurizer fitted on all of its texts.
#[derive(Debug)]
pub struct Backlog {
    pub dataset: ProjectDataset,
    pub featurizer: HashedTfidfModel,
    pub embeddings: EmbeddingMatrix,
}

impl Backlog {
    pub fn new(dataset: ProjectDataset, dim: usize) -> ApiResult<Self> {
        let texts: Vec<String> = dataset.items().iter().map(item_text).collect();
        let featurizer = fit_hashed_tfidf(&texts, dim, true)?;
        let embeddings = featurizer.embed_all(dataset.items().iter().map(|i| (i.id.as_str(), item_text(i))))?;
        Ok(Backlog {
            dataset,
            featurizer,
            embeddings,
        })
    }
}

#[derive(Debug)]
struct Session {
    /// Held by every mutation, so each session has a single writer.
    writer: Mutex<Journal>,
    state: RwLock<SessionState>,
}

impl Session {
    fn read(&self) -> std::sync::RwLockReadGuard<'_, SessionState> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, SessionState> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub datasets: Vec<PathBuf>,
    /// Where session journals live; `None` keeps sessions in memory only.
    pub journal_dir: Option<PathBuf>,
    pub train_timeout: Duration,
    pub tfidf_dim: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            datasets: Vec::new(),
            journal_dir: None,
            train_timeout: DEFAULT_TRAIN_TIMEOUT,
            tfidf_dim: DEFAULT_DIM,
        }
    }
}

#[derive(Debug)]
pub struct Service {
    backlogs: BTreeMap<String, Arc<Backlog>>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    journal_dir: Option<PathBuf>,
    train_timeout: Duration,
}

impl Service {
    /// Load the configured datasets and replay any journals found.
    pub fn open(config: &ServiceConfig) -> ApiResult<Self> {
        let datasets = config
            .datasets
            .iter()
            .map(|p| load_project(p, DataFormat::from_path(p)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_datasets(datasets, config)
    }

    pub fn with_datasets(datasets: Vec<ProjectDataset>, config: &ServiceConfig) -> ApiResult<Self> {
        let mut backlogs = BTreeMap::new();
        for ds in datasets {
            let name = ds.name().to_string();
            if backlogs.insert(name.clone(), Arc::new(Backlog::new(ds, config.tfidf_dim)?)).is_some() {
                return Err(ApiError::InvalidRequest(format!("dataset {name:?} loaded twice")));
            }
        }
        let service = Service {
            backlogs,
            sessions: RwLock::new(HashMap::new()),
            journal_dir: config.journal_dir.clone(),
            train_timeout: config.train_timeout,
        };
        if let Some(dir) = &config.journal_dir {
            std::fs::create_dir_all(dir).map_err(|e| ApiError::Storage(format!("{}: {e}", dir.display())))?;
            service.replay_all(dir)?;
        }
        Ok(service)
    }

    fn replay_all(&self, dir: &Path) -> ApiResult<()> {
        let entries = std::fs::read_dir(dir).map_err(|e| ApiError::Storage(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut sessions = self.sessions.write().unwrap_or_else(|e| e.into_inner());
        for path in paths {
            let (state, journal) = replay(&path)?;
            if !self.backlogs.contains_key(&state.dataset) {
                return Err(ApiError::Storage(format!(
                    "{}: dataset {:?} is not loaded",
                    path.display(),
                    state.dataset
                )));
            }
            sessions.insert(
                state.id.clone(),
                Arc::new(Session {
                    writer: Mutex::new(journal),
                    state: RwLock::new(state),
                }),
            );
        }
        Ok(())
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no session {id:?}")))
    }

    fn backlog(&self, name: &str) -> ApiResult<Arc<Backlog>> {
        self.backlogs
            .get(name)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no dataset {name:?}")))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).len()
    }
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/datasets", get(list_datasets))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/next-pair", get(next_pair))
        .route("/sessions/{id}/judgments", post(submit_judgment))
        .route("/sessions/{id}/skip", post(skip_pair))
        .route("/sessions/{id}/train", post(train_session))
        .route("/sessions/{id}/ranking", get(ranking).post(ranking_with_new_items))
        .with_state(service)
}

type AppState = State<Arc<Service>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub items: usize,
}

async fn list_datasets(State(service): AppState) -> Json<Vec<DatasetInfo>> {
    Json(
        service
            .backlogs
            .iter()
            .map(|(name, b)| DatasetInfo {
                name: name.clone(),
                items: b.dataset.n(),
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub dataset: String,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub judged: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub dataset: String,
    pub k: usize,
    pub seed: u64,
    pub status: Status,
    pub progress: Progress,
    pub remaining: usize,
    pub skips: usize,
    pub trained_on: Option<usize>,
}

fn summary(state: &SessionState) -> SessionSummary {
    SessionSummary {
        session_id: state.id.clone(),
        dataset: state.dataset.clone(),
        k: state.k,
        seed: state.seed,
        status: state.status,
        progress: Progress {
            judged: state.judgments.len(),
            total: state.queue.len(),
        },
        remaining: state.queue.len() - state.judgments.len(),
        skips: state.skips,
        trained_on: state.trained_on,
    }
}

async fn create_session(
    State(service): AppState,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionSummary>)> {
    let Json(req) = body?;
    let backlog = service.backlog(&req.dataset)?;
    if req.k < 1 {
        return Err(ApiError::InvalidRequest("k must be at least 1".into()));
    }
    let queue = generate_annotation_pairs(backlog.dataset.items(), req.k, req.seed)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let mut journal = match &service.journal_dir {
        Some(dir) => Journal::create(dir, &id)?,
        None => Journal::memory(),
    };
    journal.append(&JournalRecord::Created {
        session_id: id.clone(),
        dataset: req.dataset.clone(),
        k: req.k,
        seed: req.seed,
        queue: queue.clone(),
        at_ms: now_ms(),
    })?;
    let state = SessionState::new(id.clone(), req.dataset, req.k, req.seed, queue);
    let out = summary(&state);
    service.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(
        id,
        Arc::new(Session {
            writer: Mutex::new(journal),
            state: RwLock::new(state),
        }),
    );
    Ok((StatusCode::CREATED, Json(out)))
}

async fn get_session(State(service): AppState, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionSummary>> {
    let session = service.session(&id)?;
    let state = session.read();
    Ok(Json(summary(&state)))
}

/// What annotators see of an item: never its story point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemCard {
    pub id: String,
    pub title: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextPair {
    pub done: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_a: Option<ItemCard>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_b: Option<ItemCard>,
    pub progress: Progress,
}

fn card(backlog: &Backlog, id: &str) -> ApiResult<ItemCard> {
    let item = backlog
        .dataset
        .get(id)
        .ok_or_else(|| ApiError::NotFound(format!("item {id:?} is not in the backlog")))?;
    Ok(ItemCard {
        id: item.id.clone(),
        title: item.title.clone(),
        description: item.description.clone(),
    })
}

async fn next_pair(State(service): AppState, UrlPath(id): UrlPath<String>) -> ApiResult<Json<NextPair>> {
    let session = service.session(&id)?;
    let state = session.read();
    let backlog = service.backlog(&state.dataset)?;
    let progress = Progress {
        judged: state.judgments.len(),
        total: state.queue.len(),
    };
    Ok(Json(match state.next_index() {
        Some(i) => NextPair {
            done: false,
            pair_index: Some(i),
            item_a: Some(card(&backlog, &state.queue[i].a)?),
            item_b: Some(card(&backlog, &state.queue[i].b)?),
            progress,
        },
        None => NextPair {
            done: true,
            pair_index: None,
            item_a: None,
            item_b: None,
            progress,
        },
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitJudgment {
    pub pair_index: usize,
    pub choice: Choice,
    #[serde(default)]
    pub annotator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentAck {
    pub pair_index: usize,
    pub y: i8,
    pub progress: Progress,
}

async fn submit_judgment(
    State(service): AppState,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<SubmitJudgment>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<JudgmentAck>)> {
    let Json(req) = body?;
    let session = service.session(&id)?;
    let mut journal = session.writer.lock().await;
    let record = {
        let state = session.read();
        let pair = state.check_open(req.pair_index)?;
        JournalRecord::Judgment(JudgmentRecord {
            pair_index: req.pair_index,
            a: pair.a.clone(),
            b: pair.b.clone(),
            choice: req.choice,
            y: req.choice.judgment(),
            annotator: req.annotator,
            at_ms: now_ms(),
        })
    };
    journal.append(&record)?;
    let mut state = session.write();
    state.apply(&record);
    Ok((
        StatusCode::CREATED,
        Json(JudgmentAck {
            pair_index: req.pair_index,
            y: req.choice.judgment().y(),
            progress: Progress {
                judged: state.judgments.len(),
                total: state.queue.len(),
            },
        }),
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipPair {
    pub pair_index: usize,
}

async fn skip_pair(
    State(service): AppState,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<SkipPair>, JsonRejection>,
) -> ApiResult<Json<SessionSummary>> {
    let Json(req) = body?;
    let session = service.session(&id)?;
    let mut journal = session.writer.lock().await;
    session.read().check_open(req.pair_index)?;
    let record = JournalRecord::Skipped {
        pair_index: req.pair_index,
        at_ms: now_ms(),
    };
    journal.append(&record)?;
    let mut state = session.write();
    state.apply(&record);
    Ok(Json(summary(&state)))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainRequest {
    #[serde(default)]
    pub config: Option<TrainOverrides>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub session_id: String,
    pub status: Status,
    pub judgments: usize,
    pub elapsed_ms: u128,
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

async fn train_session(
    State(service): AppState,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<TrainingSummary>> {
    let req: TrainRequest = if body.iter().all(u8::is_ascii_whitespace) {
        TrainRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::InvalidRequest(format!("invalid train request: {e}")))?
    };
    let session = service.session(&id)?;
    let mut journal = session.writer.lock().await;
    let (pairs, seed, dataset) = {
        let state = session.read();
        (state.training_pairs(), state.seed, state.dataset.clone())
    };
    if pairs.is_empty() {
        return Err(ApiError::InvalidRequest("no judgments recorded yet".into()));
    }
    let base = TrainConfig::comparative_no_validation().with_seed(seed);
    let config = req.config.unwrap_or_default().apply(base);
    config.validate()?;
    let backlog = service.backlog(&dataset)?;

    let started = Instant::now();
    let task_config = config.clone();
    let task = tokio::task::spawn_blocking(move || train_comparative(&pairs, &backlog.embeddings, None, &task_config));
    let model = match tokio::time::timeout(service.train_timeout, task).await {
        Err(_) => return Err(ApiError::Timeout(service.train_timeout.as_millis())),
        Ok(Err(join)) => return Err(ApiError::Storage(format!("training task failed: {join}"))),
        Ok(Ok(result)) => result?,
    };
    let elapsed_ms = started.elapsed().as_millis();

    journal.save_model(&model)?;
    let judgments = session.read().judgments.len();
    let record = JournalRecord::Trained {
        judgments,
        at_ms: now_ms(),
    };
    journal.append(&record)?;
    let mut state = session.write();
    state.apply(&record);
    let out = TrainingSummary {
        session_id: state.id.clone(),
        status: state.status,
        judgments,
        elapsed_ms,
        config: model.config.clone(),
        best_epoch: model.best_epoch,
        history: model.history.clone(),
    };
    state.model = Some(model);
    Ok(Json(out))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewItem {
    #[serde(default)]
    pub id: Option<String>,
    pub title: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RankingRequest {
    #[serde(default)]
    pub new_items: Vec<NewItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub id: String,
    pub title: String,
    /// Unitless effort score; higher means more effort.
    pub score: f64,
    pub rank: usize,
    pub new: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub session_id: String,
    pub items: Vec<RankedItem>,
}

async fn ranking(State(service): AppState, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Ranking>> {
    rank(&service, &id, Vec::new()).map(Json)
}

async fn ranking_with_new_items(
    State(service): AppState,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<RankingRequest>, JsonRejection>,
) -> ApiResult<Json<Ranking>> {
    let Json(req) = body?;
    rank(&service, &id, req.new_items).map(Json)
}

fn rank(service: &Service, id: &str, new_items: Vec<NewItem>) -> ApiResult<Ranking> {
    let session = service.session(id)?;
    let state = session.read();
    let model = match (&state.status, &state.model) {
        (Status::Trained, Some(model)) => model,
        _ => return Err(ApiError::NotTrained("train the session before ranking".into())),
    };
    let backlog = service.backlog(&state.dataset)?;

    let mut items = Vec::with_capacity(backlog.dataset.n() + new_items.len());
    for item in backlog.dataset.items() {
        items.push(RankedItem {
            id: item.id.clone(),
            title: item.title.clone(),
            score: score(&model.head, backlog.embeddings.require(&item.id)?)?,
            rank: 0,
            new: false,
        });
    }
    let mut taken: HashSet<String> = items.iter().map(|i| i.id.clone()).collect();
    for (n, item) in new_items.into_iter().enumerate() {
        let id = item.id.unwrap_or_else(|| format!("new-{}", n + 1));
        if !taken.insert(id.clone()) {
            return Err(ApiError::InvalidRequest(format!("new item id {id:?} is already in use")));
        }
        let x = backlog.featurizer.embed(&item_text(&BacklogItem {
            id: id.clone(),
            title: item.title.clone(),
            description: item.description,
            story_point: None,
            split: Split::Unassigned,
        }));
        items.push(RankedItem {
            id,
            title: item.title,
            score: score(&model.head, &x)?,
            rank: 0,
            new: true,
        });
    }
    items.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    for (i, item) in items.iter_mut().enumerate() {
        item.rank = i + 1;
    }
    Ok(Ranking {
        session_id: state.id.clone(),
        items,
    })
}
