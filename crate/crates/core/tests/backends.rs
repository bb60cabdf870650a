//! External backends against a local stub HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use scenesynth::catalog::Group;
use scenesynth::http::HttpClient;
use scenesynth::metrics::{layout_score, score_scenes, HttpScoreBackend};
use scenesynth::relations::{infer_relations, HttpRelationBackend, ObjectSpec, SpatialRelation};

/// Serves every connection with `respond(request_body) -> (status, body)`
/// and records the request bodies.
struct Stub {
    url: String,
    bodies: Arc<Mutex<Vec<serde_json::Value>>>,
}

fn stub(respond: impl Fn(&serde_json::Value) -> (u16, String) + Send + Sync + 'static) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let seen = bodies.clone();
    let respond = Arc::new(respond);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let seen = seen.clone();
            let respond = respond.clone();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    if line == "\r\n" {
                        break;
                    }
                    if let Some((name, value)) = line.split_once(':') {
                        if name.eq_ignore_ascii_case("content-length") {
                            length = value.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                let body: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let (status, reply) = respond(&body);
                seen.lock().unwrap().push(body);
                let head = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    reply.len()
                );
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(reply.as_bytes());
            });
        }
    });
    Stub { url, bodies }
}

fn client(url: &str, attempts: u32) -> HttpClient {
    HttpClient::new(url, None, Duration::from_secs(5), attempts)
}

fn scorer(url: &str, attempts: u32) -> HttpScoreBackend {
    HttpScoreBackend { client: client(url, attempts) }
}

#[test]
fn score_reply_is_returned() {
    let s = stub(|_| (200, r#"{"score": 62}"#.into()));
    let images = vec![vec![1u8, 2, 3], vec![4u8]];
    assert_eq!(layout_score(&images, "rate this", &scorer(&s.url, 1)), Some(62));
    let bodies = s.bodies.lock().unwrap();
    assert_eq!(bodies.len(), 1);
    assert_eq!(bodies[0]["prompt"], "rate this");
    assert_eq!(bodies[0]["images"], serde_json::json!(["AQID", "BA=="]));
}

#[test]
fn out_of_range_string_score_is_clamped() {
    let s = stub(|_| (200, r#"{"score": "105"}"#.into()));
    assert_eq!(layout_score(&[vec![0]], "p", &scorer(&s.url, 1)), Some(100));
}

#[test]
fn server_errors_are_retried_then_give_up() {
    let s = stub(|_| (503, "{}".into()));
    assert_eq!(layout_score(&[vec![0]], "p", &scorer(&s.url, 3)), None);
    assert_eq!(s.bodies.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let s = stub(|_| (400, "{}".into()));
    assert_eq!(layout_score(&[vec![0]], "p", &scorer(&s.url, 3)), None);
    assert_eq!(s.bodies.lock().unwrap().len(), 1);
}

#[test]
fn unusable_reply_gives_no_score() {
    let s = stub(|_| (200, r#"{"verdict": "fine"}"#.into()));
    assert_eq!(layout_score(&[vec![0]], "p", &scorer(&s.url, 1)), None);
}

#[test]
fn unreachable_backend_gives_no_score() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}/");
    assert_eq!(layout_score(&[vec![0]], "p", &scorer(&url, 2)), None);
}

#[test]
fn concurrent_scoring_keeps_job_order() {
    let s = stub(|body| {
        let n = body["images"].as_array().unwrap().len();
        (200, format!(r#"{{"score": {}}}"#, n * 10))
    });
    let jobs: Vec<Vec<Vec<u8>>> = (1..=7).map(|n| vec![vec![0u8]; n]).collect();
    let scores = score_scenes(&jobs, "p", &scorer(&s.url, 1), 3);
    assert_eq!(scores, (1..=7).map(|n| Some(n as u8 * 10)).collect::<Vec<_>>());
}

#[test]
fn relation_backend_round_trip() {
    let s = stub(|body| {
        let reply = if body["placed"].as_array().unwrap().is_empty() {
            // references an object that is not placed yet
            r#"{"relations": [{"type": "near", "ref": "b", "dist": 1.0}, {"type": "facing", "dir": "S"}]}"#
        } else {
            r#"{"relations": [{"type": "near", "ref": "a", "dist": 1.5}, {"type": "hover"}, {"type": "far"}]}"#
        };
        (200, reply.to_string())
    });
    let objects = vec![
        ObjectSpec { id: "a".into(), class: "table".into(), dims: [1.2, 0.8, 0.75] },
        ObjectSpec { id: "b".into(), class: "chair".into(), dims: [0.5, 0.5, 0.9] },
    ];
    let mut backend = HttpRelationBackend::new(client(&s.url, 1), "place {{next_object}} in {{group}}");
    let assignment = infer_relations(&objects, Group::Floor, &mut backend).unwrap();
    assert_eq!(assignment.order, vec!["a", "b"]);
    assert_eq!(
        assignment.relations,
        vec![
            vec![SpatialRelation::Facing { direction: scenesynth::relations::Direction::S }],
            vec![SpatialRelation::Near { reference: "a".into(), max_dist: 1.5 }],
        ]
    );
    let bodies = s.bodies.lock().unwrap();
    assert_eq!(bodies.len(), 2);
    assert_eq!(bodies[0]["group"], "floor");
    assert_eq!(bodies[1]["next_object"]["id"], "b");
    assert_eq!(bodies[1]["placed"][0]["id"], "a");
    assert!(bodies[1]["prompt"].as_str().unwrap().starts_with("place {\"id\":\"b\""));
}

#[test]
fn relation_transport_failure_is_an_error() {
    let s = stub(|_| (500, "{}".into()));
    let objects = vec![ObjectSpec { id: "a".into(), class: "table".into(), dims: [1.0, 1.0, 1.0] }];
    let mut backend = HttpRelationBackend::new(client(&s.url, 2), "{{next_object}}");
    assert!(infer_relations(&objects, Group::Floor, &mut backend).is_err());
}
