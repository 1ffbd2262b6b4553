use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use reqwest::StatusCode;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use scenl::{diff_traces, parse, run_simulation, samples, SensorScript, TraceRecord};
use scenl_service::{RegistrySources, Service, ServiceConfig};

const EXTRA: &str = "entity a\nfn b: procedure/0\n";

fn sources() -> RegistrySources {
    RegistrySources {
        descriptors: format!("{}\n{EXTRA}", samples::HOUSE_REGISTRY),
        rules: samples::THERMOSTAT_RULES.to_string(),
    }
}

struct Server {
    base: String,
    http: reqwest::Client,
    stop: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

impl Server {
    async fn start(dir: &Path, configure: impl FnOnce(&mut ServiceConfig)) -> Server {
        let mut config = ServiceConfig::new(dir);
        configure(&mut config);
        let service = Service::open(config).unwrap();
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (stop, rx) = oneshot::channel();
        let task = tokio::spawn(async move {
            service
                .serve(listener, async {
                    let _ = rx.await;
                })
                .await
                .unwrap();
        });
        Server {
            base,
            http: reqwest::Client::new(),
            stop: Some(stop),
            task: Some(task),
        }
    }

    async fn seeded(dir: &Path) -> Server {
        Server::start(dir, |c| c.registry = Some(sources())).await
    }

    async fn shutdown(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.task.take().unwrap().await.unwrap();
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn send(&self, req: reqwest::RequestBuilder) -> (StatusCode, Value) {
        let resp = req.send().await.unwrap();
        let status = resp.status();
        let text = resp.text().await.unwrap();
        let body = serde_json::from_str(&text).unwrap_or(Value::String(text));
        (status, body)
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        self.send(self.http.get(self.url(path))).await
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.send(self.http.post(self.url(path)).json(&body)).await
    }

    async fn put(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.send(self.http.put(self.url(path)).json(&body)).await
    }

    async fn delete(&self, path: &str) -> (StatusCode, Value) {
        self.send(self.http.delete(self.url(path))).await
    }

    async fn create(&self, name: &str, source: &str) -> String {
        let (status, body) = self.post("/scenarios", json!({"name": name, "source": source})).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        body["id"].as_str().unwrap().to_string()
    }

    async fn subscribe(&self) -> Stream {
        let resp = self.http.get(self.url("/run/stream")).send().await.unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        Stream {
            resp,
            buf: Vec::new(),
        }
    }
}

fn human() -> Value {
    json!({"sensor": "env", "name": "humanHere", "value": 1, "likelihood": 100})
}

fn temperature(v: i64) -> Value {
    json!({"sensor": "thermometer", "name": "temperature", "value": v, "likelihood": 100})
}

fn records(body: &Value) -> Vec<TraceRecord> {
    serde_json::from_value(body["records"].clone()).unwrap()
}

fn lines(records: &[TraceRecord]) -> Vec<String> {
    records.iter().map(ToString::to_string).collect()
}

struct Stream {
    resp: reqwest::Response,
    buf: Vec<u8>,
}

impl Stream {
    async fn next(&mut self) -> TraceRecord {
        loop {
            if let Some(pos) = self.buf.iter().position(|b| *b == b'\n') {
                let line: Vec<u8> = self.buf.drain(..=pos).collect();
                return serde_json::from_slice(&line).unwrap();
            }
            let chunk = tokio::time::timeout(Duration::from_secs(5), self.resp.chunk())
                .await
                .expect("stream stalled")
                .unwrap()
                .expect("stream ended");
            self.buf.extend_from_slice(&chunk);
        }
    }

    async fn take(&mut self, n: usize) -> Vec<TraceRecord> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.next().await);
        }
        out
    }
}

#[tokio::test]
async fn scenario_crud() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::seeded(dir.path()).await;

    let (status, body) = s.get("/scenarios").await;
    assert_eq!((status, body), (StatusCode::OK, json!([])));

    let (status, rec) = s.post("/scenarios", json!({"name": "greet", "source": samples::GREETING})).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(rec["status"], "draft");
    assert_eq!(rec["diagnostics"], json!([]));
    let id = rec["id"].as_str().unwrap();

    let (status, read) = s.get(&format!("/scenarios/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(read["source"].as_str().unwrap(), samples::GREETING);

    let (status, bad) = s.post("/scenarios", json!({"name": "broken", "source": "x.y("})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(bad["status"], "draft");
    assert_eq!(bad["diagnostics"][0]["code"], "parse-error");
    assert_eq!(s.get("/scenarios").await.1.as_array().unwrap().len(), 2);

    let (status, upd) = s.put(&format!("/scenarios/{id}"), json!({"source": "nobody.home();"})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(upd["diagnostics"][0]["code"], "unknown-entity");
    assert_eq!(upd["name"], "greet");

    let (status, _) = s.delete(&format!("/scenarios/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    let (status, err) = s.delete(&format!("/scenarios/{id}")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "not_found");
    let (status, _) = s.put("/scenarios/nope", json!({"source": "a.b();"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    s.shutdown().await;
}

#[tokio::test]
async fn store_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let source = "  a.b();   # spacing and comments are kept\n\n";
    let s = Server::seeded(dir.path()).await;
    let id = s.create("kept", source).await;
    s.shutdown().await;

    // no registry given this time: the stored one is reused
    let s = Server::start(dir.path(), |_| {}).await;
    let (status, rec) = s.get(&format!("/scenarios/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rec["source"].as_str().unwrap(), source);
    assert_eq!(s.get("/registry").await.1["descriptors"].as_str().unwrap(), sources().descriptors);
    s.shutdown().await;
}

#[tokio::test]
async fn greeting_run_reaches_every_subscriber() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::seeded(dir.path()).await;
    let id = s.create("greet", samples::GREETING).await;
    let mut first = s.subscribe().await;
    let mut second = s.subscribe().await;

    let (status, started) = s.post("/run/start", json!({"id": id})).await;
    assert_eq!(status, StatusCode::OK, "{started}");
    assert!(records(&started).is_empty());
    assert_eq!(s.get(&format!("/scenarios/{id}")).await.1["status"], "loaded");

    s.post("/run/tick", json!({"n": 3})).await;
    let (status, body) = s.post("/run/inject", human()).await;
    assert_eq!(status, StatusCode::OK);
    let expected = [
        "T=3 IN env.humanHere=1@100",
        "T=3 OUT bioloid.sayHello() br=1",
        "T=3 OUT greta.sayHello() br=2",
        "T=3 OUT nabaztag.sayHello() br=3",
    ];
    assert_eq!(lines(&records(&body)), expected);
    assert_eq!(lines(&first.take(4).await), expected);
    assert_eq!(lines(&second.take(4).await), expected);

    // a late subscriber only sees what follows
    let mut late = s.subscribe().await;
    s.post("/run/inject", human()).await;
    assert_eq!(late.next().await.to_string(), "T=3 IN env.humanHere=1@100");

    let (_, snap) = s.get("/run/snapshot?last=2").await;
    assert_eq!(snap["total_records"], 5);
    assert_eq!(snap["records"].as_array().unwrap().len(), 2);
    assert_eq!(snap["status"], "finished");

    let (_, entities) = s.get("/run/entities").await;
    assert_eq!(entities["greta"].as_array().unwrap().len(), 1);

    let (status, _) = s.post("/run/stop", json!({})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s.get(&format!("/scenarios/{id}")).await.1["status"], "stopped");
    assert_eq!(s.get("/run/snapshot").await.1["active"], false);
    s.shutdown().await;
}

#[tokio::test]
async fn manual_ticks_drive_timers() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::seeded(dir.path()).await;
    let id = s.create("timer", "WAIT(5); a.b();").await;
    s.post("/run/start", json!({"id": id, "mode": "manual"})).await;
    let (_, body) = s.post("/run/tick", json!({"n": 4})).await;
    assert!(records(&body).is_empty());
    let (_, snap) = s.get("/run/snapshot").await;
    assert_eq!(snap["clock"], 4);
    assert_eq!(snap["branches"][0]["wait"], "tick:5");
    let resp = s.http.post(s.url("/run/tick")).send().await.unwrap();
    let body: Value = resp.json().await.unwrap();
    assert_eq!(lines(&records(&body)), ["T=5 OUT a.b() br=0"]);
    s.shutdown().await;
}

#[tokio::test]
async fn run_control_errors() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::seeded(dir.path()).await;
    let (status, err) = s.post("/run/inject", human()).await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::CONFLICT, Some("no_running_machine")));
    assert_eq!(s.post("/run/tick", json!({})).await.0, StatusCode::CONFLICT);
    assert_eq!(s.post("/run/stop", json!({})).await.0, StatusCode::CONFLICT);
    assert_eq!(s.get("/run/snapshot").await.0, StatusCode::CONFLICT);

    let id = s.create("greet", samples::GREETING).await;
    s.post("/run/start", json!({"id": id})).await;
    let (status, err) = s
        .post("/run/inject", json!({"sensor": "radar", "name": "blip", "value": 1, "likelihood": 100}))
        .await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_event")));
    let (status, _) = s
        .post("/run/inject", json!({"sensor": "env", "name": "humanHere", "value": 1, "likelihood": 400}))
        .await;
    assert!(status.is_client_error());
    let (status, err) = s.post("/run/start", json!({"id": id})).await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::CONFLICT, Some("already_running")));
    assert_eq!(s.post("/run/start", json!({"id": "missing"})).await.0, StatusCode::NOT_FOUND);
    s.post("/run/stop", json!({})).await;

    let bad = s.post("/scenarios", json!({"name": "bad", "source": "nobody.home();"})).await.1;
    let (status, err) = s.post("/run/start", json!({"id": bad["id"]})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["diagnostics"][0]["code"], "unknown-entity");
    s.shutdown().await;
}

#[tokio::test]
async fn runaway_loop_halts_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), |c| {
        c.registry = Some(sources());
        c.step_budget = 500;
    })
    .await;
    let id = s.create("spin", "<symbolic.cold()>(*[symbolic.cold()](h.on();););").await;
    s.post("/run/start", json!({"id": id})).await;
    let (status, err) = s.post("/run/inject", temperature(3)).await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("run_halted")));
    assert_eq!(s.get(&format!("/scenarios/{id}")).await.1["status"], "stopped");
    assert_eq!(s.post("/run/tick", json!({})).await.0, StatusCode::CONFLICT);
    s.shutdown().await;
}

#[tokio::test]
async fn interleaved_clients_produce_a_replayable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let s = Arc::new(Server::seeded(dir.path()).await);
    let id = s.create("thermostat", samples::THERMOSTAT).await;
    let mut stream = s.subscribe().await;
    s.post("/run/start", json!({"id": id})).await;

    let clients: Vec<_> = (0..4)
        .map(|c| {
            let s = s.clone();
            tokio::spawn(async move {
                for i in 0..15i64 {
                    if (i + c) % 3 == 0 {
                        s.post("/run/tick", json!({"n": 1})).await;
                    } else {
                        s.post("/run/inject", temperature((i * 7 + c * 11) % 45 - 5)).await;
                    }
                }
            })
        })
        .collect();
    for c in clients {
        c.await.unwrap();
    }
    let (_, snap) = s.get("/run/snapshot?last=100000").await;
    let total = snap["total_records"].as_u64().unwrap() as usize;
    let broadcast = stream.take(total).await;
    let stored: Vec<TraceRecord> = serde_json::from_value(snap["records"].clone()).unwrap();
    assert_eq!(broadcast, stored);
    assert!(broadcast.iter().any(TraceRecord::is_out));

    let script = SensorScript::from_trace(&broadcast);
    let replay = run_simulation(
        &parse(samples::THERMOSTAT).unwrap(),
        &sources().build().unwrap(),
        &[],
        &script,
        snap["clock"].as_u64().unwrap(),
    )
    .unwrap();
    assert!(diff_traces(&broadcast, &replay.trace).is_empty());
    Arc::try_unwrap(s).ok().unwrap().shutdown().await;
}

#[tokio::test]
async fn live_mode_ticks_on_its_own() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), |c| {
        c.registry = Some(sources());
        c.tick_period = Duration::from_millis(5);
    })
    .await;
    let id = s.create("timer", "WAIT(3); a.b();").await;
    let mut stream = s.subscribe().await;
    let (_, body) = s.post("/run/start", json!({"id": id, "mode": "live"})).await;
    assert_eq!(body["mode"], "live");
    assert_eq!(s.get(&format!("/scenarios/{id}")).await.1["status"], "running");
    assert_eq!(stream.next().await.to_string(), "T=3 OUT a.b() br=0");
    s.post("/run/stop", json!({})).await;
    let clock = s.get("/run/snapshot").await.1["clock"].as_u64().unwrap();
    tokio::time::sleep(Duration::from_millis(30)).await;
    assert_eq!(s.get("/run/snapshot").await.1["clock"].as_u64().unwrap(), clock);
    s.shutdown().await;
}

#[tokio::test]
async fn macros_are_stored_alongside_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::seeded(dir.path()).await;
    let body = "/(bioloid.sayHello();, greta.sayHello(););";
    let (status, m) = s.post("/scenarios", json!({"name": "pair", "source": body, "macro": true})).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(m["macro"], true);
    let (status, _) = s.post("/scenarios", json!({"name": "not an ident", "source": body, "macro": true})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let id = s.create("uses", "<env.humanHere()>(@pair;);").await;
    s.post("/run/start", json!({"id": id})).await;
    let (_, out) = s.post("/run/inject", human()).await;
    assert_eq!(records(&out).iter().filter(|r| r.is_out()).count(), 2);

    let (status, cyc) = s.put(&format!("/scenarios/{}", m["id"].as_str().unwrap()), json!({"source": "@pair;"})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(cyc["diagnostics"][0]["code"], "macro-cycle");
    s.shutdown().await;
}

#[tokio::test]
async fn check_endpoint_formats() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::seeded(dir.path()).await;
    let (_, body) = s
        .post("/check", json!({"source": "<env.humanHere()>(/(bioloid.sayHello();,greta.sayHello();,nabaztag.sayHello();););"}))
        .await;
    assert_eq!(body["diagnostics"], json!([]));
    assert_eq!(body["formatted"].as_str().unwrap(), samples::GREETING.trim_end());
    let (status, err) = s.put("/registry", json!({"descriptors": "sensor symbolic\nevent x: none"})).await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));
    s.shutdown().await;
}

#[tokio::test]
async fn webhooks_receive_commands_and_failures_are_traced() {
    // a receiving entity
    let received: Arc<Mutex<Vec<Value>>> = Arc::default();
    let sink = received.clone();
    let app = axum::Router::new().route(
        "/hook",
        axum::routing::post(move |axum::Json(v): axum::Json<Value>| {
            let sink = sink.clone();
            async move {
                sink.lock().unwrap().push(v);
            }
        }),
    );
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let hook = format!("http://{}/hook", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    // and one nobody listens on
    let dead = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let dead_url = format!("http://{}/", dead.local_addr().unwrap());
    drop(dead);

    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), |c| {
        c.registry = Some(sources());
        c.webhooks.insert("bioloid".into(), hook);
        c.webhooks.insert("greta".into(), dead_url);
    })
    .await;
    let id = s.create("greet", samples::GREETING).await;
    let mut stream = s.subscribe().await;
    s.post("/run/start", json!({"id": id})).await;
    s.post("/run/inject", human()).await;
    let mut seen = stream.take(5).await;
    let fail = seen.pop().unwrap();
    assert!(
        matches!(&fail, TraceRecord::DeliveryFail { entity, tick: 0, branch: 2, .. } if entity == "greta"),
        "{fail}"
    );
    assert!(fail.to_string().starts_with("T=0 DELIVERY_FAIL greta.sayHello br=2 reason="));

    let (_, entities) = s.get("/run/entities").await;
    assert!(entities.get("nabaztag").is_some());
    assert!(entities.get("bioloid").is_none());
    for _ in 0..100 {
        if !received.lock().unwrap().is_empty() {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    let got = received.lock().unwrap().clone();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0]["Action"]["function"], "sayHello");
    s.shutdown().await;
}
