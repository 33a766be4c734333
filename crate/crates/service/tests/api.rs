use std::path::Path;
use std::time::Duration;

use nalgebra::Vector3;
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

use seat_bench::{generate_dataset, hint_at_error, DatasetConfig, ObjectSource};
use seat_core::geom::mesh::TriMesh;
use seat_core::geom::pose::{Pose, DEG};
use seat_core::scene::Scene;
use seat_service::{GoalsResponse, PlanStatus, PlanView, SceneView, ServiceConfig, SessionDescriptor};

async fn start(cfg: ServiceConfig) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(seat_service::serve(listener, cfg));
    format!("http://{addr}")
}

fn with_dataset(dir: &Path) -> ServiceConfig {
    ServiceConfig {
        dataset: Some(dir.to_path_buf()),
        ..ServiceConfig::default()
    }
}

fn dataset(dir: &Path, kits: usize, seed: u64, hard: bool) -> Scene {
    let cfg = DatasetConfig {
        n_assemblies: 1,
        kits_min: kits,
        kits_max: kits,
        seed,
        hard,
        ..DatasetConfig::default()
    };
    generate_dataset(&ObjectSource::Procedural, &cfg, dir).unwrap();
    Scene::load(&dir.join("scene_0000")).unwrap()
}

async fn create(c: &Client, base: &str, body: Value) -> SessionDescriptor {
    let r = c.post(format!("{base}/api/v1/sessions")).json(&body).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::CREATED);
    r.json().await.unwrap()
}

async fn scene(c: &Client, base: &str, id: &str) -> SceneView {
    let r = c.get(format!("{base}/api/v1/sessions/{id}/scene")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    r.json().await.unwrap()
}

async fn plan(c: &Client, base: &str, id: &str, pid: &str) -> PlanView {
    c.get(format!("{base}/api/v1/sessions/{id}/plans/{pid}"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap()
}

async fn wait_plan(c: &Client, base: &str, id: &str, pid: &str) -> PlanView {
    for _ in 0..600 {
        let p = plan(c, base, id, pid).await;
        if matches!(p.status, PlanStatus::Done | PlanStatus::Failed) {
            return p;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    panic!("plan {pid} never finished");
}

async fn error_code(r: reqwest::Response) -> (StatusCode, String) {
    let status = r.status();
    let v: Value = r.json().await.unwrap();
    (status, v["code"].as_str().unwrap_or_default().to_string())
}

#[tokio::test(flavor = "multi_thread")]
async fn seeded_sessions_are_reproducible() {
    let base = start(ServiceConfig::default()).await;
    let c = Client::new();
    let a = create(&c, &base, json!({"seed": 7})).await;
    let b = create(&c, &base, json!({"seed": 7})).await;
    assert_ne!(a.session_id, b.session_id);
    assert_eq!(a.revision, 1);
    assert_eq!(a.objects, b.objects);
    assert_eq!(a.objects.len(), a.cavities.len());
    let (sa, sb) = (scene(&c, &base, &a.session_id).await, scene(&c, &base, &b.session_id).await);
    assert_eq!(sa.kit.mesh_url, sb.kit.mesh_url);
    for (x, y) in sa.objects.iter().zip(&sb.objects) {
        assert_eq!((x.id, &x.mesh_url, x.pose), (y.id, &y.mesh_url, y.pose));
    }

    let r = c.get(format!("{base}/api/v1/sessions/nope/scene")).send().await.unwrap();
    assert_eq!(error_code(r).await, (StatusCode::NOT_FOUND, "not_found".into()));
    // no dataset configured
    let r = c.post(format!("{base}/api/v1/sessions")).json(&json!({"scene": "scene_0000"})).send().await.unwrap();
    assert_eq!(error_code(r).await, (StatusCode::NOT_FOUND, "not_found".into()));
}

#[tokio::test(flavor = "multi_thread")]
async fn dataset_sessions_serve_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dataset(dir.path(), 4, 3, false);
    let base = start(with_dataset(dir.path())).await;
    let c = Client::new();
    let d = create(&c, &base, json!({"scene": "scene_0000"})).await;
    assert_eq!(d.objects.len(), 4);
    assert_eq!(d.cavities.len(), 4);

    let s = scene(&c, &base, &d.session_id).await;
    assert_eq!(s.revision, 1);
    assert_eq!(s.bounds, truth.workspace_bounds);
    for (o, t) in s.objects.iter().zip(&truth.objects) {
        assert_eq!(o.id, t.id);
        assert_eq!(o.pose, t.gt_start);
    }
    for url in s.objects.iter().map(|o| &o.mesh_url).chain([&s.kit.mesh_url]) {
        let r = c.get(format!("{base}{url}")).send().await.unwrap();
        assert_eq!(r.status(), StatusCode::OK);
        let mesh = TriMesh::from_obj(&r.text().await.unwrap()).unwrap();
        assert!(!mesh.is_empty());
    }
    let r = c.get(format!("{base}/api/v1/meshes/0000.obj")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);

    for body in [json!({"scene": "scene_0042"}), json!({"scene": "../x"})] {
        let r = c.post(format!("{base}/api/v1/sessions")).json(&body).send().await.unwrap();
        assert_eq!(error_code(r).await, (StatusCode::NOT_FOUND, "not_found".into()));
    }
    let r = c.post(format!("{base}/api/v1/sessions")).json(&json!({"scene": "scene_0000", "seed": 1})).send().await.unwrap();
    assert_eq!(error_code(r).await, (StatusCode::BAD_REQUEST, "invalid_argument".into()));

    let r = c.get(format!("{base}/api/v1/nothing")).send().await.unwrap();
    assert_eq!(error_code(r).await, (StatusCode::NOT_FOUND, "not_found".into()));
    let r = c.get(format!("{base}/")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert!(r.text().await.unwrap().contains("/api/v1"));
}

#[tokio::test(flavor = "multi_thread")]
async fn goals_are_snapped_planned_and_executed() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dataset(dir.path(), 2, 21, false);
    let base = start(with_dataset(dir.path())).await;
    let c = Client::new();
    let d = create(&c, &base, json!({"scene": "scene_0000"})).await;
    let id = d.session_id.clone();
    let goals_url = format!("{base}/api/v1/sessions/{id}/goals");
    let margin = truth.assembly.spec.margin;

    // rejected goals leave the session untouched
    let far = Pose::from_translation(Vector3::new(5.0, 0.0, 0.0));
    let r = c.post(&goals_url).json(&json!({"goals": [{"object_id": 0, "pose": far}]})).send().await.unwrap();
    assert_eq!(error_code(r).await, (StatusCode::BAD_REQUEST, "invalid_argument".into()));
    let r = c.post(&goals_url).json(&json!({"goals": [{"object_id": 9, "pose": Pose::identity()}]})).send().await.unwrap();
    assert_eq!(error_code(r).await, (StatusCode::NOT_FOUND, "not_found".into()));
    let r = c.post(&goals_url).json(&json!({"goals": []})).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    assert_eq!(scene(&c, &base, &id).await.revision, 1);

    let gt = truth.objects[0].gt_kit;
    let goal = hint_at_error(&gt, 0.01, 10.0 * DEG, 5);
    let first = {
        let c = c.clone();
        let url = goals_url.clone();
        tokio::spawn(async move { c.post(&url).json(&json!({"goals": [{"object_id": 0, "pose": goal}]})).send().await })
    };
    // a second batch while the first is still snapping
    tokio::time::sleep(Duration::from_millis(300)).await;
    let r = c.post(&goals_url).json(&json!({"goals": [{"object_id": 1, "pose": goal}]})).send().await.unwrap();
    assert_eq!(error_code(r).await, (StatusCode::CONFLICT, "conflict".into()));

    let r = first.await.unwrap().unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let resp: GoalsResponse = r.json().await.unwrap();
    assert_eq!(resp.plan_ids.len(), 1);
    assert!(resp.revision > 1);
    let snapped = resp.snapped[0].result.pose;
    assert!((snapped.p - goal.p).amax() <= 0.028 + 1e-12);
    assert!(snapped.rotation_error(&goal) <= 27.5 * DEG + 1e-9);
    assert!(snapped.position_error(&gt) <= margin, "{}", snapped.position_error(&gt));

    let pid = &resp.plan_ids[0];
    let early = plan(&c, &base, &id, pid).await;
    assert!(matches!(early.status, PlanStatus::Queued | PlanStatus::Running | PlanStatus::Done));
    let done = wait_plan(&c, &base, &id, pid).await;
    assert_eq!(done.status, PlanStatus::Done, "{:?}", done.reason);
    assert_eq!(done.place, snapped);
    let s = scene(&c, &base, &id).await;
    assert_eq!(s.objects[0].pose, snapped);
    assert_eq!(Some(s.revision), done.resulting_revision);
    assert!(s.revision > resp.revision);

    // both objects at once, the placed one re-snapped; executed in object order
    let goal1 = hint_at_error(&truth.objects[1].gt_kit, 0.01, 10.0 * DEG, 6);
    let r = c
        .post(&goals_url)
        .json(&json!({"goals": [{"object_id": 1, "pose": goal1}, {"object_id": 0, "pose": gt}]}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let resp2: GoalsResponse = r.json().await.unwrap();
    assert!(resp2.revision > s.revision);
    assert_eq!(resp2.plan_ids.len(), 2);
    assert_eq!(resp2.snapped.iter().map(|x| x.object_id).collect::<Vec<_>>(), vec![0, 1]);
    let a = wait_plan(&c, &base, &id, &resp2.plan_ids[0]).await;
    let b = wait_plan(&c, &base, &id, &resp2.plan_ids[1]).await;
    assert_eq!((a.object_id, b.object_id), (0, 1));
    assert!(a.resulting_revision < b.resulting_revision);
    assert_eq!(b.status, PlanStatus::Done, "{:?}", b.reason);
    // terminal states stay put
    let again = plan(&c, &base, &id, &resp2.plan_ids[0]).await;
    assert_eq!((again.status, again.resulting_revision), (a.status, a.resulting_revision));
    let s2 = scene(&c, &base, &id).await;
    assert_eq!(s2.objects[1].pose, b.place);

    let r = c.get(format!("{base}/api/v1/sessions/{id}/plans/plan-99")).send().await.unwrap();
    assert_eq!(error_code(r).await, (StatusCode::NOT_FOUND, "not_found".into()));
}

#[tokio::test(flavor = "multi_thread")]
async fn upside_down_objects_fail_with_a_reason() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dataset(dir.path(), 1, 5, true);
    let base = start(with_dataset(dir.path())).await;
    let c = Client::new();
    let d = create(&c, &base, json!({"scene": "scene_0000"})).await;
    let gt = truth.objects[0].gt_kit;
    let r = c
        .post(format!("{base}/api/v1/sessions/{}/goals", d.session_id))
        .json(&json!({"goals": [{"object_id": 0, "pose": gt}]}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let resp: GoalsResponse = r.json().await.unwrap();
    let p = wait_plan(&c, &base, &d.session_id, &resp.plan_ids[0]).await;
    assert_eq!(p.status, PlanStatus::Failed);
    assert!(!p.reason.unwrap_or_default().is_empty());
    // the object stays where it was
    assert_eq!(scene(&c, &base, &d.session_id).await.objects[0].pose, truth.objects[0].gt_start);
}

#[tokio::test(flavor = "multi_thread")]
async fn garbage_bodies_never_crash_the_service() {
    let base = start(ServiceConfig::default()).await;
    let c = Client::new();
    let deep = "[".repeat(10_000);
    let bodies: Vec<String> = vec![
        "".into(),
        "{".into(),
        "null".into(),
        "[]".into(),
        "{\"seed\": -1}".into(),
        "{\"seed\": 1e400}".into(),
        "{\"seed\": 1, \"extra\": true}".into(),
        "{}".into(),
        deep.clone(),
        "\u{0}\u{1}\u{2}".into(),
    ];
    for body in &bodies {
        let r = c.post(format!("{base}/api/v1/sessions")).body(body.clone()).send().await.unwrap();
        let (status, code) = error_code(r).await;
        assert!(status.is_client_error(), "{body:?}: {status}");
        assert!(!code.is_empty());
    }
    let d = create(&c, &base, json!({"seed": 3})).await;
    let url = format!("{base}/api/v1/sessions/{}/goals", d.session_id);
    let goal_bodies = [
        "{\"goals\": 5}".to_string(),
        "{\"goals\": [{\"object_id\": -1, \"pose\": {\"p\": [0,0,0], \"q\": [0,0,0,1]}}]}".into(),
        "{\"goals\": [{\"object_id\": 0, \"pose\": {\"p\": [0,0,0], \"q\": [0,0,0,2]}}]}".into(),
        "{\"goals\": [{\"object_id\": 0, \"pose\": {\"p\": [0,0], \"q\": [0,0,0,1]}}]}".into(),
        "{\"goals\": [{\"object_id\": 0, \"pose\": {\"p\": [1e300,0,0], \"q\": [0,0,0,1]}}]}".into(),
        "{\"goals\": [{\"object_id\": 0}]}".into(),
        deep,
    ];
    for body in &goal_bodies {
        let r = c.post(&url).body(body.clone()).send().await.unwrap();
        let (status, code) = error_code(r).await;
        assert!(status.is_client_error(), "{body:?}: {status}");
        assert!(!code.is_empty());
    }
    // still serving, nothing changed
    assert_eq!(scene(&c, &base, &d.session_id).await.revision, 1);
}
