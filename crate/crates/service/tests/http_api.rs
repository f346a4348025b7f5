use futures_util::StreamExt;
use mimo_arena_core::linksim::image::{GrayImage, TILE_COUNT};
use mimo_arena_core::linksim::SessionConfig;
use mimo_arena_service::{Engine, EngineHandle, Server, BACKLOG_CLOSE_CODE, PGM_CONTENT_TYPE, REVISION_HEADER};
use serde_json::{json, Value};
use std::net::SocketAddr;
use std::time::Duration;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Harness {
    addr: SocketAddr,
    engine: EngineHandle,
    _owner: Engine,
    _stop: tokio::sync::oneshot::Sender<()>,
    http: reqwest::Client,
}

impl Harness {
    async fn start(config: SessionConfig) -> Harness {
        let owner = Engine::spawn_paused(config, vec![]).unwrap();
        let engine = owner.handle();
        let server = Server::bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
        let addr = server.local_addr().unwrap();
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        tokio::spawn(server.run(engine.clone(), async {
            let _ = stopped.await;
        }));
        Harness {
            addr,
            engine,
            _owner: owner,
            _stop: stop,
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    async fn state(&self) -> Value {
        self.http.get(self.url("/v1/state")).send().await.unwrap().json().await.unwrap()
    }

    async fn post(&self, path: &str, body: Value) -> reqwest::Response {
        self.http.post(self.url(path)).json(&body).send().await.unwrap()
    }

    async fn subscribe(&self) -> Ws {
        let (ws, _) = connect_async(format!("ws://{}/v1/metrics", self.addr)).await.unwrap();
        // The upgrade completes before the subscription is registered on the
        // server; wait until it is.
        tokio::time::sleep(Duration::from_millis(50)).await;
        ws
    }
}

async fn next_snapshot(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(20), ws.next())
            .await
            .expect("snapshot within 20 s")
            .expect("stream open")
            .unwrap();
        if let Message::Text(t) = msg {
            assert!(t.ends_with('\n'));
            return serde_json::from_str(&t).unwrap();
        }
    }
}

fn fast(overrides: Value) -> SessionConfig {
    let mut v = serde_json::to_value(SessionConfig {
        tick_hz: 200.0,
        symbols_per_tick: 574,
        ..Default::default()
    })
    .unwrap();
    for (k, x) in overrides.as_object().unwrap() {
        v[k] = x.clone();
    }
    serde_json::from_value(v).unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn fresh_state_echoes_defaults() {
    let h = Harness::start(SessionConfig::default()).await;
    let s = h.state().await;
    assert_eq!(s["config"], serde_json::to_value(SessionConfig::default()).unwrap());
    assert_eq!(s["session"]["run_state"], "paused");
    assert_eq!(s["session"]["uptime_ticks"], 0);
    assert!(s["snapshot"].is_null());
}

#[tokio::test(flavor = "multi_thread")]
async fn config_updates_apply_at_the_next_tick() {
    let h = Harness::start(fast(json!({"detector": "ZF"}))).await;
    let mut ws = h.subscribe().await;

    let res = h.post("/v1/config", json!({"detector": "SPHERE"})).await;
    assert_eq!(res.status(), 200);
    let revision: u64 = res.headers()[REVISION_HEADER].to_str().unwrap().parse().unwrap();
    let echoed: Value = res.json().await.unwrap();
    assert_eq!(echoed["detector"], "SPHERE");
    assert_eq!(echoed["snr_db"], 20.0);

    h.post("/v1/run", json!({"running": true})).await;
    let first = next_snapshot(&mut ws).await;
    assert_eq!(first["tick_index"], 0);
    assert_eq!(first["config_revision"], revision);
    assert_eq!(first["config"]["detector"], "SPHERE");

    let res = h.post("/v1/config", json!({"antenna_mask": 0})).await;
    assert_eq!(res.status(), 422);
    let err: Value = res.json().await.unwrap();
    assert_eq!(err["field"], "antenna_mask");
    let res = h.post("/v1/config", json!({"n_streams": 4, "antenna_mask": 1})).await;
    assert_eq!(res.status(), 200);
    let overload_rev: u64 = res.headers()[REVISION_HEADER].to_str().unwrap().parse().unwrap();
    assert_eq!(overload_rev, revision + 1);

    let mut last_tick = 0;
    loop {
        let s = next_snapshot(&mut ws).await;
        let tick = s["tick_index"].as_u64().unwrap();
        assert_eq!(tick, last_tick + 1, "gap-free");
        last_tick = tick;
        if s["config_revision"] == overload_rev {
            assert_eq!(s["config"]["antenna_mask"], 1);
            break;
        }
        assert_eq!(s["config_revision"], revision);
        assert_eq!(s["config"]["antenna_mask"], 15);
    }
    let state = h.state().await;
    assert!(state["session"]["config_revision"].as_u64().unwrap() >= overload_rev);
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_updates_are_rejected_with_field() {
    let h = Harness::start(fast(json!({}))).await;
    for (body, field) in [
        (json!({"snr_db": "loud"}), "snr_db"),
        (json!({"warp": 9}), "warp"),
        (json!({"detector": "LMMSE"}), "detector"),
        (json!({"n_streams": 4, "antenna_mask": 0}), "antenna_mask"),
    ] {
        let res = h.post("/v1/config", body.clone()).await;
        assert_eq!(res.status(), 422, "{body}");
        let err: Value = res.json().await.unwrap();
        assert_eq!(err["field"], field, "{body}");
        assert!(err["reason"].is_string());
    }
    assert_eq!(h.state().await["config"], serde_json::to_value(fast(json!({}))).unwrap());
}

#[tokio::test(flavor = "multi_thread")]
async fn pause_stops_ticks() {
    let h = Harness::start(fast(json!({}))).await;
    let res: Value = h.post("/v1/run", json!({"running": true})).await.json().await.unwrap();
    assert_eq!(res["running"], true);
    tokio::time::sleep(Duration::from_millis(100)).await;
    h.post("/v1/run", json!({"running": false})).await;
    tokio::time::sleep(Duration::from_millis(50)).await;
    let a = h.state().await;
    tokio::time::sleep(Duration::from_millis(150)).await;
    let b = h.state().await;
    assert_eq!(b["session"]["run_state"], "paused");
    assert!(a["snapshot"]["tick_index"].as_u64().unwrap() > 0);
    assert_eq!(a["snapshot"]["tick_index"], b["snapshot"]["tick_index"]);
    assert_eq!(a["session"]["uptime_ticks"], b["session"]["uptime_ticks"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn two_subscribers_see_identical_sequences() {
    let h = Harness::start(fast(json!({"detector": "MMSE"}))).await;
    let mut a = h.subscribe().await;
    let mut b = h.subscribe().await;
    h.engine.set_running(true);
    for expected in 0..20u64 {
        let (sa, sb) = (next_snapshot(&mut a).await, next_snapshot(&mut b).await);
        assert_eq!(sa["tick_index"], expected);
        assert_eq!(sa, sb);
    }
    // A late subscriber starts at or after the current tick.
    let now = h.state().await["session"]["uptime_ticks"].as_u64().unwrap();
    let mut late = h.subscribe().await;
    assert!(next_snapshot(&mut late).await["tick_index"].as_u64().unwrap() >= now);
}

#[tokio::test(flavor = "multi_thread")]
async fn frames_are_pgm_and_bounded_by_stream_count() {
    let h = Harness::start(fast(json!({"snr_db": 300.0, "symbols_per_tick": 100000, "tick_hz": 1000.0}))).await;
    h.engine.set_running(true);
    while h.state().await["session"]["uptime_ticks"].as_u64().unwrap() < 2 {
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    h.engine.set_running(false);
    for stream in 0..4 {
        let res = h.http.get(h.url(&format!("/v1/frame/{stream}"))).send().await.unwrap();
        assert_eq!(res.status(), 200);
        assert_eq!(res.headers()["content-type"], PGM_CONTENT_TYPE);
        let body = res.bytes().await.unwrap();
        assert_eq!(body.as_ref(), GrayImage::test_pattern(stream).to_pgm().as_slice());
    }
    let res = h.http.get(h.url("/v1/frame/7")).send().await.unwrap();
    assert_eq!(res.status(), 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn overloaded_zf_frame_matches_failure_counters() {
    let h = Harness::start(fast(json!({"detector": "ZF", "antenna_mask": 1}))).await;
    let mut ws = h.subscribe().await;
    h.engine.set_running(true);
    let mut failed = [0u64; 4];
    let mut degenerate = true;
    let mut ticks = 0;
    while ticks < 30 {
        let s = next_snapshot(&mut ws).await;
        assert_eq!(s["tick_index"], ticks);
        degenerate &= s["degenerate_flag"].as_bool().unwrap();
        for m in s["streams"].as_array().unwrap() {
            failed[m["stream"].as_u64().unwrap() as usize] += m["tiles_failed"].as_u64().unwrap();
        }
        ticks += 1;
    }
    h.engine.set_running(false);
    tokio::time::sleep(Duration::from_millis(50)).await;
    assert!(degenerate);
    // Drain whatever ran before the pause took effect.
    let total = h.state().await["session"]["uptime_ticks"].as_u64().unwrap();
    while ticks < total {
        let s = next_snapshot(&mut ws).await;
        for m in s["streams"].as_array().unwrap() {
            failed[m["stream"].as_u64().unwrap() as usize] += m["tiles_failed"].as_u64().unwrap();
        }
        ticks += 1;
    }
    assert!((total as usize) < TILE_COUNT);
    for (stream, &f) in failed.iter().enumerate() {
        let body = h.http.get(h.url(&format!("/v1/frame/{stream}"))).send().await.unwrap().bytes().await.unwrap();
        let frame = GrayImage::from_pgm(&body).unwrap();
        let source = GrayImage::test_pattern(stream);
        let inverted = (0..total as usize)
            .filter(|&t| frame.tile(t).iter().zip(source.tile(t).iter()).all(|(r, s)| *r == 255 - s))
            .count() as u64;
        assert_eq!(inverted, f, "stream {stream}");
        assert!(f as f64 > 0.9 * total as f64);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn stalled_subscriber_is_closed_for_backlog() {
    let h = Harness::start(fast(json!({"detector": "MMSE", "tick_hz": 1000.0, "symbols_per_tick": 1}))).await;
    let mut ws = h.subscribe().await;
    h.engine.set_running(true);
    // Read nothing until the socket buffers and the 100-deep queue overflow.
    let mut waited = 0;
    loop {
        tokio::time::sleep(Duration::from_millis(250)).await;
        waited += 1;
        let s = h.state().await;
        if s["session"]["uptime_ticks"].as_u64().unwrap() > 3000 || waited > 80 {
            break;
        }
    }
    let mut last = None;
    let close = loop {
        let msg = tokio::time::timeout(Duration::from_secs(20), ws.next()).await.unwrap();
        match msg {
            Some(Ok(Message::Text(t))) => {
                let tick = serde_json::from_str::<Value>(&t).unwrap()["tick_index"].as_u64().unwrap();
                if let Some(prev) = last {
                    assert_eq!(tick, prev + 1, "delivered prefix stays gap-free");
                }
                last = Some(tick);
            }
            Some(Ok(Message::Close(frame))) => break frame.expect("close frame"),
            Some(Ok(_)) => {}
            other => panic!("expected a close frame, got {other:?}"),
        }
    };
    assert_eq!(u16::from(close.code), BACKLOG_CLOSE_CODE);
    assert_eq!(close.reason.as_str(), "backlog");
    assert!(last.is_some());
}
