//! Session service behind the scene editor: serves completed scene geometry,
//! accepts goal poses, snaps and plans them, and executes the plans in the
//! simulated scene one at a time.

use std::collections::{BTreeMap, HashMap};
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seat_bench::{make_scene, DatasetConfig, Manifest, ObjectSource};
use seat_core::completion::CompletionMode;
use seat_core::geom::mesh::Aabb;
use seat_core::geom::pose::Pose;
use seat_core::geom::volume::VoxelVolume;
use seat_core::pipeline::{complete_kit, complete_object};
use seat_core::plan::{execute_plan_sim, grasp_pose_topdown, make_plan, ActionPlan, GraspConfig};
use seat_core::scene::{observe, Observation, ObserveOptions, Scene};
use seat_core::snap::{snap_pose, SnapConfig, SnapInputs, SnapResult};
use seat_core::Error;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Dataset that `{"scene": id}` session requests draw from.
    pub dataset: Option<PathBuf>,
    pub completion: CompletionMode,
    pub snap: SnapConfig,
    pub grasp: GraspConfig,
    /// Directory of static UI assets served at `/`.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            completion: CompletionMode::Oracle,
            snap: SnapConfig::default(),
            grasp: GraspConfig::default(),
            ui_dir: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Queued,
    Running,
    Done,
    Failed,
}

struct PlanEntry {
    object_id: usize,
    status: PlanStatus,
    reason: Option<String>,
    resulting_revision: Option<u64>,
    snapped: Pose,
    plan: Option<ActionPlan>,
}

struct Session {
    scene: Scene,
    objects: BTreeMap<usize, Arc<VoxelVolume>>,
    kit: Arc<VoxelVolume>,
    object_meshes: BTreeMap<usize, String>,
    kit_mesh: String,
    revision: u64,
    /// A goal batch is being snapped or executed.
    busy: bool,
    plans: BTreeMap<String, PlanEntry>,
    next_plan: usize,
}

impl Session {
    fn bump(&mut self) -> u64 {
        self.revision += 1;
        self.revision
    }
}

type Shared<T> = Arc<Mutex<T>>;

pub struct AppState {
    cfg: ServiceConfig,
    sessions: RwLock<HashMap<String, Shared<Session>>>,
    /// OBJ text by content hash.
    meshes: RwLock<HashMap<String, Arc<String>>>,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Arc<AppState> {
        Arc::new(AppState {
            cfg,
            sessions: RwLock::default(),
            meshes: RwLock::default(),
        })
    }

    fn session(&self, id: &str) -> Result<Shared<Session>, ApiError> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }

    fn store_mesh(&self, vol: &VoxelVolume) -> String {
        let obj = vol.to_mesh().to_obj();
        let hash = hex::encode(Sha256::digest(obj.as_bytes()));
        self.meshes
            .write()
            .expect("mesh table poisoned")
            .entry(hash.clone())
            .or_insert_with(|| Arc::new(obj));
        format!("/api/v1/meshes/{hash}.obj")
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_argument", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::InvalidArgument(_)
            | Error::OutOfBounds(_)
            | Error::EmptyInput(_)
            | Error::Format { .. }
            | Error::Json(_) => StatusCode::BAD_REQUEST,
            Error::NotGraspable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "code": self.code, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("bad request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Scene id within the configured dataset.
    #[serde(default)]
    pub scene: Option<String>,
    /// Seed of a freshly generated scene.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CavityInfo {
    pub object_id: usize,
    /// World pose of the kit block.
    pub kit_pose: Pose,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub session_id: String,
    pub revision: u64,
    pub objects: Vec<usize>,
    pub cavities: Vec<CavityInfo>,
}

fn load_scene(cfg: &ServiceConfig, req: &CreateSession) -> ApiResult<Scene> {
    match (&req.scene, req.seed) {
        (Some(id), None) => {
            let dataset = cfg
                .dataset
                .as_deref()
                .ok_or_else(|| ApiError::not_found("the service has no dataset"))?;
            let manifest = Manifest::load(dataset).map_err(|_| ApiError::not_found("dataset manifest not found"))?;
            let entry = manifest
                .scenes
                .iter()
                .find(|e| &e.id == id)
                .ok_or_else(|| ApiError::not_found(format!("no scene {id} in the dataset")))?;
            Ok(Scene::load(&manifest.scene_dir(dataset, entry))?)
        }
        (None, Some(seed)) => {
            let dcfg = DatasetConfig {
                seed,
                ..DatasetConfig::default()
            };
            Ok(make_scene(&ObjectSource::Procedural, &dcfg, 0)?.0)
        }
        _ => Err(ApiError::invalid("give exactly one of \"scene\" or \"seed\"")),
    }
}

struct Prepared {
    scene: Scene,
    objects: BTreeMap<usize, VoxelVolume>,
    kit: VoxelVolume,
}

fn prepare(cfg: &ServiceConfig, req: &CreateSession) -> ApiResult<Prepared> {
    let scene = load_scene(cfg, req)?;
    let obs: Observation = observe(&scene, &ObserveOptions::default())?;
    let kit = complete_kit(&scene, &obs, cfg.completion)?;
    let objects = scene
        .objects
        .iter()
        .map(|o| Ok((o.id, complete_object(&scene, &obs, o.id, cfg.completion)?)))
        .collect::<seat_core::Result<_>>()?;
    Ok(Prepared { scene, objects, kit })
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<SessionDescriptor>)> {
    let req: CreateSession = parse_body(&body)?;
    let worker = app.clone();
    let (prepared, object_meshes, kit_mesh) = blocking(move || {
        let p = prepare(&worker.cfg, &req)?;
        let meshes: BTreeMap<usize, String> = p.objects.iter().map(|(&id, v)| (id, worker.store_mesh(v))).collect();
        let kit_mesh = worker.store_mesh(&p.kit);
        Ok::<_, ApiError>((p, meshes, kit_mesh))
    })
    .await??;
    let id = format!("{:032x}", rand::random::<u128>());
    let descriptor = SessionDescriptor {
        session_id: id.clone(),
        revision: 1,
        objects: prepared.scene.objects.iter().map(|o| o.id).collect(),
        cavities: (0..prepared.scene.assembly.len())
            .map(|i| CavityInfo {
                object_id: prepared.scene.assembly.kits[i].object_id,
                kit_pose: prepared.scene.assembly.world_kit_pose(i),
            })
            .collect(),
    };
    let session = Session {
        scene: prepared.scene,
        objects: prepared.objects.into_iter().map(|(k, v)| (k, Arc::new(v))).collect(),
        kit: Arc::new(prepared.kit),
        object_meshes,
        kit_mesh,
        revision: 1,
        busy: false,
        plans: BTreeMap::new(),
        next_plan: 0,
    };
    app.sessions
        .write()
        .expect("session table poisoned")
        .insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(descriptor)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MeshRef {
    pub mesh_url: String,
    pub pose: Pose,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObjectView {
    pub id: usize,
    pub mesh_url: String,
    pub pose: Pose,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneView {
    pub session_id: String,
    pub revision: u64,
    pub objects: Vec<ObjectView>,
    pub kit: MeshRef,
    pub bounds: Aabb,
}

async fn get_scene(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SceneView>> {
    let session = app.session(&id)?;
    let s = session.lock().expect("session poisoned");
    Ok(Json(SceneView {
        session_id: id,
        revision: s.revision,
        objects: s
            .scene
            .objects
            .iter()
            .map(|o| ObjectView {
                id: o.id,
                mesh_url: s.object_meshes[&o.id].clone(),
                pose: o.pose,
            })
            .collect(),
        kit: MeshRef {
            mesh_url: s.kit_mesh.clone(),
            pose: Pose::identity(),
        },
        bounds: s.scene.workspace_bounds,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Goal {
    pub object_id: usize,
    pub pose: Pose,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalsRequest {
    goals: Vec<Goal>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Snapped {
    pub object_id: usize,
    #[serde(flatten)]
    pub result: SnapResult,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GoalsResponse {
    pub revision: u64,
    pub snapped: Vec<Snapped>,
    pub plan_ids: Vec<String>,
}

/// Snap and plan one goal. A grasp failure yields no plan and a reason.
fn snap_and_plan(
    object: &VoxelVolume,
    kit: &VoxelVolume,
    start: &Pose,
    goal: &Goal,
    snap: &SnapConfig,
    grasp: &GraspConfig,
) -> seat_core::Result<(SnapResult, Result<ActionPlan, String>)> {
    let cfg = SnapConfig {
        uninformed: false,
        ..snap.clone()
    };
    let r = snap_pose(&SnapInputs { object, kit }, Some(&goal.pose), &cfg)?;
    let plan = match grasp_pose_topdown(object, start, grasp) {
        Ok(g) => Ok(make_plan(goal.object_id, start, &g, &r.pose)),
        Err(Error::NotGraspable(_)) => Err("not-graspable".to_string()),
        Err(e) => return Err(e),
    };
    Ok((r, plan))
}

async fn post_goals(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<GoalsResponse>> {
    let session = app.session(&id)?;
    let mut req: GoalsRequest = parse_body(&body)?;
    if req.goals.is_empty() {
        return Err(ApiError::invalid("no goals"));
    }
    // plans run in object order
    req.goals.sort_by_key(|g| g.object_id);
    let work = {
        let mut s = session.lock().expect("session poisoned");
        if s.busy {
            return Err(ApiError::new(StatusCode::CONFLICT, "conflict", "a goal batch is already in flight"));
        }
        let mut work = Vec::with_capacity(req.goals.len());
        for g in &req.goals {
            let o = s.scene.object(g.object_id)?;
            if !g.pose.is_finite() || !s.scene.workspace_bounds.contains(&g.pose.p) {
                return Err(ApiError::invalid(format!("goal for object {} lies outside the workspace", g.object_id)));
            }
            work.push((s.objects[&g.object_id].clone(), o.pose));
        }
        s.busy = true;
        (work, s.kit.clone())
    };
    let cfg = app.cfg.clone();
    let goals = req.goals;
    let outcome = blocking(move || {
        let (work, kit) = work;
        goals
            .into_iter()
            .zip(work)
            .map(|(g, (object, start))| {
                let (r, plan) = snap_and_plan(&object, &kit, &start, &g, &cfg.snap, &cfg.grasp)?;
                Ok((g.object_id, r, plan))
            })
            .collect::<seat_core::Result<Vec<_>>>()
    })
    .await;
    let results = match outcome {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => {
            session.lock().expect("session poisoned").busy = false;
            return Err(e.into());
        }
        Err(e) => {
            session.lock().expect("session poisoned").busy = false;
            return Err(e);
        }
    };

    let (response, queued) = {
        let mut s = session.lock().expect("session poisoned");
        let mut plan_ids = Vec::with_capacity(results.len());
        let mut snapped = Vec::with_capacity(results.len());
        let mut queued = Vec::new();
        for (object_id, r, plan) in results {
            let pid = format!("plan-{}", s.next_plan);
            s.next_plan += 1;
            let (status, reason, plan) = match plan {
                Ok(p) => {
                    queued.push(pid.clone());
                    (PlanStatus::Queued, None, Some(p))
                }
                Err(reason) => (PlanStatus::Failed, Some(reason), None),
            };
            s.plans.insert(
                pid.clone(),
                PlanEntry {
                    object_id,
                    status,
                    reason,
                    resulting_revision: None,
                    snapped: r.pose,
                    plan,
                },
            );
            plan_ids.push(pid);
            snapped.push(Snapped { object_id, result: r });
        }
        let revision = s.bump();
        for pid in &plan_ids {
            let e = s.plans.get_mut(pid).expect("just inserted");
            if e.status == PlanStatus::Failed {
                e.resulting_revision = Some(revision);
            }
        }
        if queued.is_empty() {
            s.busy = false;
        }
        (
            GoalsResponse {
                revision,
                snapped,
                plan_ids,
            },
            queued,
        )
    };
    if !queued.is_empty() {
        tokio::spawn(execute_queue(session, queued));
    }
    Ok(Json(response))
}

/// Run queued plans in order, committing each result with a revision bump.
async fn execute_queue(session: Shared<Session>, queued: Vec<String>) {
    for pid in queued {
        let (scene, plan) = {
            let mut s = session.lock().expect("session poisoned");
            let e = s.plans.get_mut(&pid).expect("queued plan exists");
            e.status = PlanStatus::Running;
            let plan = e.plan.clone().expect("queued plans carry a plan");
            s.bump();
            (s.scene.clone(), plan)
        };
        let result = tokio::task::spawn_blocking(move || execute_plan_sim(&scene, &plan)).await;
        let mut s = session.lock().expect("session poisoned");
        let (status, reason) = match result {
            Ok(Ok((next, exec))) if exec.success => {
                s.scene = next;
                (PlanStatus::Done, None)
            }
            Ok(Ok((_, exec))) => (PlanStatus::Failed, exec.reason),
            Ok(Err(e)) => (PlanStatus::Failed, Some(e.to_string())),
            Err(e) => (PlanStatus::Failed, Some(format!("executor failed: {e}"))),
        };
        let revision = s.bump();
        let e = s.plans.get_mut(&pid).expect("queued plan exists");
        e.status = status;
        e.reason = reason;
        e.resulting_revision = Some(revision);
    }
    session.lock().expect("session poisoned").busy = false;
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlanView {
    pub plan_id: String,
    pub object_id: usize,
    pub status: PlanStatus,
    pub reason: Option<String>,
    pub resulting_revision: Option<u64>,
    pub place: Pose,
    pub plan: Option<ActionPlan>,
}

async fn get_plan(
    State(app): State<Arc<AppState>>,
    UrlPath((id, pid)): UrlPath<(String, String)>,
) -> ApiResult<Json<PlanView>> {
    let session = app.session(&id)?;
    let s = session.lock().expect("session poisoned");
    let e = s.plans.get(&pid).ok_or_else(|| ApiError::not_found(format!("no plan {pid}")))?;
    Ok(Json(PlanView {
        plan_id: pid,
        object_id: e.object_id,
        status: e.status,
        reason: e.reason.clone(),
        resulting_revision: e.resulting_revision,
        place: e.snapped,
        plan: e.plan.clone(),
    }))
}

async fn get_mesh(State(app): State<Arc<AppState>>, UrlPath(file): UrlPath<String>) -> ApiResult<Response> {
    let hash = file
        .strip_suffix(".obj")
        .ok_or_else(|| ApiError::not_found(format!("no mesh {file}")))?;
    let obj = app
        .meshes
        .read()
        .expect("mesh table poisoned")
        .get(hash)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("no mesh {file}")))?;
    Ok(([(header::CONTENT_TYPE, "model/obj")], obj.as_str().to_owned()).into_response())
}

const PLACEHOLDER: &str = "<!doctype html>\n<html><head><title>seat</title></head>\
<body><p>No editor bundle is installed. The API lives under <code>/api/v1</code>.</p></body></html>\n";

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

async fn static_file(app: Arc<AppState>, rel: String) -> ApiResult<Response> {
    let Some(root) = app.cfg.ui_dir.clone() else {
        return if rel.is_empty() || rel == "index.html" {
            Ok(Html(PLACEHOLDER).into_response())
        } else {
            Err(ApiError::not_found(format!("no file {rel}")))
        };
    };
    let rel = if rel.is_empty() { "index.html".to_string() } else { rel };
    let rel_path = PathBuf::from(&rel);
    if !rel_path.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(ApiError::not_found(format!("no file {rel}")));
    }
    let path = root.join(rel_path);
    let data = blocking(move || std::fs::read(&path).map(|d| (d, content_type(&path))))
        .await?
        .map_err(|_| ApiError::not_found(format!("no file {rel}")))?;
    Ok(([(header::CONTENT_TYPE, data.1)], data.0).into_response())
}

async fn index(State(app): State<Arc<AppState>>) -> ApiResult<Response> {
    static_file(app, String::new()).await
}

async fn asset(State(app): State<Arc<AppState>>, UrlPath(rel): UrlPath<String>) -> ApiResult<Response> {
    static_file(app, rel).await
}

async fn api_fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(app: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/scene", get(get_scene))
        .route("/sessions/{id}/goals", post(post_goals))
        .route("/sessions/{id}/plans/{pid}", get(get_plan))
        .route("/meshes/{file}", get(get_mesh))
        .fallback(api_fallback);
    Router::new()
        .nest("/api/v1", api)
        .route("/", get(index))
        .route("/{*path}", get(asset))
        .with_state(app)
}

/// Serve until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, cfg: ServiceConfig) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::new(cfg))).await
}
