//! Shared helpers for the integration suites: handcrafted scenarios, a
//! well-behaved scripted chat endpoint, and a minimal local HTTP server
//! speaking the chat-completions wire format.

#![allow(dead_code)]

use lgr::rankers::CoOccurrencePrior;
use lgr::world::{
    GroundTruthMap, ObjectInstance, RoomCategoryList, Scenario, Terrain, WALL_CATEGORY,
};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;

/// Build a scenario from terrain rows (`#` wall, `.` free) with every free
/// cell labeled "kitchen" and the given objects placed as (class, x, y).
pub fn scenario_from_rows(rows: &[&str], objects: &[(&str, i32, i32)]) -> Scenario {
    let categories = RoomCategoryList::default();
    let wall = categories.index_of(WALL_CATEGORY).unwrap();
    let kitchen = categories.index_of("kitchen").unwrap();
    let mut terrain = Vec::new();
    let mut room = Vec::new();
    for row in rows {
        for ch in row.chars() {
            if ch == '#' {
                terrain.push(Terrain::Occupied);
                room.push(wall);
            } else {
                terrain.push(Terrain::Free);
                room.push(kitchen);
            }
        }
    }
    let map = GroundTruthMap::new(
        rows[0].len() as u32,
        rows.len() as u32,
        terrain,
        room,
        categories,
    )
    .unwrap();
    let objects: Vec<ObjectInstance> = objects
        .iter()
        .enumerate()
        .map(|(i, (class, x, y))| ObjectInstance {
            id: i as u32,
            class_name: class.to_string(),
            x: *x,
            y: *y,
        })
        .collect();
    Scenario::new(map, objects, CoOccurrencePrior::default_household()).unwrap()
}

/// A protocol-conformant canned answer: room queries get "bathroom", the
/// ranking query gets the identity ranking over 8 steps.
pub fn valid_chat_answer(prompt: &str) -> String {
    if prompt.starts_with("The detected objects are:") {
        "bathroom".to_string()
    } else {
        (1..=8)
            .map(|i| format!("{i}. bathroom from Step {i}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Spawn a local HTTP server answering chat-completions requests with
/// `answer(prompt)`. Returns the endpoint URL. The server thread runs until
/// the test process exits.
pub fn spawn_chat_server(answer: fn(&str) -> String) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind localhost");
    let port = listener.local_addr().unwrap().port();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let mut reader = BufReader::new(stream);
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).is_err() || line.trim().is_empty() {
                    break;
                }
                if let Some(v) = line
                    .to_ascii_lowercase()
                    .strip_prefix("content-length:")
                    .map(|v| v.trim().to_string())
                {
                    content_length = v.parse().unwrap_or(0);
                }
            }
            let mut body = vec![0u8; content_length];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            let request: serde_json::Value =
                serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
            let prompt = request["messages"][0]["content"].as_str().unwrap_or("");
            let content = answer(prompt);
            let response = serde_json::json!({
                "choices": [{"message": {"role": "assistant", "content": content}}]
            })
            .to_string();
            let mut stream = reader.into_inner();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                response.len(),
                response
            );
        }
    });
    format!("http://127.0.0.1:{port}/v1/chat/completions")
}
