use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use futures_util::{SinkExt, StreamExt};
use http_body_util::BodyExt;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};
use tower::ServiceExt;
use voxfilter_core::filters::FilterKind;
use voxfilter_core::histogram::build_histogram;
use voxfilter_core::phantom::{generate_phantom, presets};
use voxfilter_core::render::render_frame;
use voxfilter_service::protocol::{decode_frame, HEADER_LEN};
use voxfilter_service::{router, AppState, Reply, SessionState};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn app(n: usize) -> Arc<AppState> {
    AppState::new(generate_phantom(&presets::noisy_phantom(n)).unwrap()).unwrap()
}

async fn start(app: Arc<AppState>) -> SocketAddr {
    let listener = voxfilter_service::bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(voxfilter_service::serve(listener, app, None, std::future::pending()));
    addr
}

async fn connect(addr: SocketAddr) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{addr}/stream")).await.unwrap().0
}

async fn send(ws: &mut Ws, json: &str) {
    ws.send(Message::text(json)).await.unwrap();
}

enum Incoming {
    Reply(Reply),
    Frame(Vec<u8>),
}

async fn next(ws: &mut Ws) -> Incoming {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(30), ws.next())
            .await
            .expect("message within timeout")
            .unwrap()
            .unwrap();
        match msg {
            Message::Text(t) => return Incoming::Reply(serde_json::from_str(&t).unwrap()),
            Message::Binary(b) => return Incoming::Frame(b.to_vec()),
            _ => continue,
        }
    }
}

async fn next_reply(ws: &mut Ws) -> Reply {
    match next(ws).await {
        Incoming::Reply(r) => r,
        Incoming::Frame(_) => panic!("expected a JSON reply"),
    }
}

/// Reads until a binary frame arrives, returning it with the frame info
/// that preceded it.
async fn next_frame(ws: &mut Ws) -> (Reply, Vec<u8>) {
    let mut info = None;
    loop {
        match next(ws).await {
            Incoming::Reply(r @ Reply::FrameInfo { .. }) => info = Some(r),
            Incoming::Reply(_) => {}
            Incoming::Frame(b) => return (info.expect("frame info precedes frame"), b),
        }
    }
}

#[tokio::test]
async fn health_and_state_routes() {
    let app = app(16);
    let hash = app.volume.identity_hash();
    let r = router(app.clone(), None);
    let resp = r.clone().oneshot(Request::get("/health").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body: serde_json::Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(body["status"], "ok");
    assert_eq!(body["volume_hash"], hash);
    assert_eq!(body["dims"], serde_json::json!([16, 16, 16]));

    let resp = r.clone().oneshot(Request::get("/state").body(Body::empty()).unwrap()).await.unwrap();
    let state: SessionState = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(state.volume.hash, hash);
    assert_eq!(state.sequence, 0);

    let resp = r.oneshot(Request::get("/nothing").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn static_files_are_served() {
    let dir = tempfile_dir();
    std::fs::write(dir.join("index.html"), "<html>viewer</html>").unwrap();
    let r = router(app(8), Some(dir.clone()));
    let resp = r.oneshot(Request::get("/index.html").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&body[..], b"<html>viewer</html>");
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("vxsf-static-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn frame_matches_direct_render() {
    let app = app(128);
    let addr = start(app.clone()).await;
    let mut ws = connect(addr).await;

    send(&mut ws, r#"{"type":"set_filter","kind":"local-cluster"}"#).await;
    let Reply::Ack { command, .. } = next_reply(&mut ws).await else { panic!("ack expected") };
    assert_eq!(command, "set_filter");
    let (_, first) = next_frame(&mut ws).await;

    let mut latencies = Vec::new();
    let mut last_seq = decode_frame(&first).unwrap().0.sequence;
    for i in 0..5 {
        let sent = Instant::now();
        send(&mut ws, r#"{"type":"request_frame","width":256,"height":256}"#).await;
        let Reply::Ack { state, threshold, .. } = next_reply(&mut ws).await else { panic!("ack expected") };
        let (info, bytes) = next_frame(&mut ws).await;
        latencies.push(sent.elapsed().as_secs_f64() * 1e3);

        assert_eq!(bytes.len(), HEADER_LEN + 65536);
        let (header, pixels) = decode_frame(&bytes).unwrap();
        assert!(header.sequence > last_seq);
        last_seq = header.sequence;
        let Reply::FrameInfo { sequence, snapshot, .. } = info else { unreachable!() };
        assert_eq!(sequence, header.sequence);
        assert_eq!(snapshot.filter.kind, FilterKind::LocalCluster);

        if i == 0 {
            let direct = render_frame(&app.volume, &state.camera, &state.params, &state.filter, Some(&app.histogram))
                .unwrap();
            assert_eq!(direct.snapshot.threshold, threshold);
            assert_eq!(header.config_digest, direct.snapshot.digest());
            assert_eq!(pixels, &direct.pixels[..]);
        }
    }
    latencies.sort_by(f64::total_cmp);
    let median = latencies[latencies.len() / 2];
    assert!(median < 250.0, "median command-to-frame latency {median:.1} ms");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn auto_threshold_and_errors() {
    let app = app(24);
    let otsu = build_histogram(&app.volume).unwrap().otsu_threshold() as f64;
    let addr = start(app).await;
    let mut ws = connect(addr).await;

    send(&mut ws, r#"{"type":"set_threshold","value":101}"#).await;
    let Reply::Ack { threshold, .. } = next_reply(&mut ws).await else { panic!() };
    assert_eq!(threshold, 101.0);
    let (_, frame) = next_frame(&mut ws).await;
    let seq = decode_frame(&frame).unwrap().0.sequence;

    send(&mut ws, r#"{"type":"set_threshold","value":"auto"}"#).await;
    let Reply::Ack { threshold, state, .. } = next_reply(&mut ws).await else { panic!() };
    assert_eq!(threshold, otsu);
    assert_eq!(state.filter.threshold, None);
    next_frame(&mut ws).await;

    for bad in [r#"{"type":"explode"}"#, "not json", r#"{"type":"request_frame","width":0,"height":4}"#] {
        send(&mut ws, bad).await;
        match next_reply(&mut ws).await {
            Reply::Error { sequence, .. } => assert_eq!(sequence, seq + 1),
            other => panic!("error expected, got {other:?}"),
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bursts_coalesce_to_latest_camera() {
    let app = app(64);
    let addr = start(app).await;
    let mut ws = connect(addr).await;

    send(&mut ws, r#"{"type":"set_camera","orbit":{"azimuth":10,"elevation":20,"distance":150}}"#).await;
    send(&mut ws, r#"{"type":"set_camera","orbit":{"azimuth":80,"elevation":-15,"distance":170}}"#).await;
    let mut acks = 0;
    let mut frames = Vec::new();
    let mut final_camera = None;
    // both acks arrive; then frames until one shows the final camera
    loop {
        match next(&mut ws).await {
            Incoming::Reply(Reply::Ack { state, .. }) => {
                acks += 1;
                final_camera = Some(state.camera);
            }
            Incoming::Reply(Reply::FrameInfo { sequence, snapshot, .. }) => frames.push((sequence, snapshot.camera)),
            Incoming::Reply(r) => panic!("unexpected {r:?}"),
            Incoming::Frame(_) => {
                if acks == 2 && frames.last().map(|(_, c)| c) == final_camera.as_ref() {
                    break;
                }
            }
        }
    }
    assert!(frames.len() <= 2, "{} frames", frames.len());
    assert!(frames.windows(2).all(|w| w[0].0 < w[1].0));
    // nothing further is pending
    let quiet = tokio::time::timeout(Duration::from_millis(300), ws.next()).await;
    assert!(quiet.is_err(), "unexpected extra message");
}
