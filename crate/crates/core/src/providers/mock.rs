//! Minimal blocking HTTP/1.1 server for exercising the client protocol.
//!
//! Each connection carries one request and is closed after the reply. A
//! handler may answer with JSON or hang up without replying, which the client
//! sees as a transport failure.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;

use super::http::{
    ClicksRequest, ClicksResponse, MaskProposalsRequest, MaskProposalsResponse, ProbabilityMapRequest,
    ProbabilityMapResponse, SegmentRequest, SegmentResponse,
};
use crate::clicks::{serialize_clicks_text, ClickSet};
use crate::io::{decode_rgb_png, encode_mask_png, f32s_to_le_bytes};
use crate::raster::BinaryMask;
use crate::tiling::scaled_size;

#[derive(Debug, Clone)]
pub struct MockRequest {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl MockRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone)]
pub enum MockReply {
    Json { status: u16, body: String },
    Hangup,
}

impl MockReply {
    pub fn ok(body: impl Into<String>) -> Self {
        MockReply::Json {
            status: 200,
            body: body.into(),
        }
    }

    pub fn status(status: u16) -> Self {
        MockReply::Json {
            status,
            body: format!("{{\"error\":\"status {status}\"}}"),
        }
    }
}

pub type Handler = dyn Fn(&MockRequest) -> MockReply + Send + Sync;

pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    requests: Arc<Mutex<Vec<MockRequest>>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&MockRequest) -> MockReply + Send + Sync + 'static) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let thread = {
            let stop = stop.clone();
            let requests = requests.clone();
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let handler = handler.clone();
                    let requests = requests.clone();
                    std::thread::spawn(move || {
                        if let Err(e) = serve(stream, &*handler, &requests) {
                            log::debug!("mock server connection error: {e}");
                        }
                    });
                }
            })
        };
        Ok(Self {
            addr,
            stop,
            requests,
            thread: Some(thread),
        })
    }

    /// Server answering all four endpoints with schema-valid payloads.
    pub fn echo() -> std::io::Result<Self> {
        Self::start(echo_handler)
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<MockRequest> {
        self.requests.lock().expect("poisoned").clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<MockRequest>>) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    if method.is_empty() {
        return Ok(());
    }
    let mut headers = Vec::new();
    loop {
        line.clear();
        reader.read_line(&mut line)?;
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse::<usize>().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;
    let request = MockRequest {
        method,
        path,
        headers,
        body,
    };
    let reply = handler(&request);
    log.lock().expect("poisoned").push(request);

    let mut stream = stream;
    match reply {
        MockReply::Hangup => stream.shutdown(std::net::Shutdown::Both),
        MockReply::Json { status, body } => {
            write!(
                stream,
                "HTTP/1.1 {status} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )?;
            stream.flush()
        }
    }
}

fn bad_request(msg: impl std::fmt::Display) -> MockReply {
    MockReply::Json {
        status: 400,
        body: serde_json::json!({ "error": msg.to_string() }).to_string(),
    }
}

fn decode_image(b64: &str) -> Result<image::RgbImage, String> {
    let bytes = B64.decode(b64).map_err(|e| e.to_string())?;
    decode_rgb_png(&bytes).map_err(|e| e.to_string())
}

fn mask_b64(mask: &BinaryMask) -> String {
    B64.encode(encode_mask_png(mask).expect("in-memory PNG encode"))
}

/// Deterministic answers for every endpoint:
/// probability maps are constant 0.5 at the long-side-scaled size, proposals
/// are one full-image mask, segmentation returns the positive click pixels,
/// and click suggestion clicks the image center.
pub fn echo_handler(req: &MockRequest) -> MockReply {
    const MODEL: &str = "mock-echo";
    match req.path.as_str() {
        "/v1/probability-map" => {
            let r: ProbabilityMapRequest = match serde_json::from_slice(&req.body) {
                Ok(r) => r,
                Err(e) => return bad_request(e),
            };
            let img = match decode_image(&r.image_png_b64) {
                Ok(i) => i,
                Err(e) => return bad_request(e),
            };
            let (w, h) = scaled_size(img.width(), img.height(), r.long_side);
            let plane = B64.encode(f32s_to_le_bytes(&vec![0.5; (w * h) as usize]));
            let resp = ProbabilityMapResponse {
                width: w,
                height: h,
                maps: vec![plane; r.classes.len()],
                model: Some(MODEL.into()),
            };
            MockReply::ok(serde_json::to_string(&resp).expect("serializable"))
        }
        "/v1/mask-proposals" => {
            let r: MaskProposalsRequest = match serde_json::from_slice(&req.body) {
                Ok(r) => r,
                Err(e) => return bad_request(e),
            };
            let img = match decode_image(&r.image_png_b64) {
                Ok(i) => i,
                Err(e) => return bad_request(e),
            };
            let full = BinaryMask::filled(img.width(), img.height(), true).expect("decoded image is non-empty");
            let resp = MaskProposalsResponse {
                masks: vec![mask_b64(&full)],
                model: Some(MODEL.into()),
            };
            MockReply::ok(serde_json::to_string(&resp).expect("serializable"))
        }
        "/v1/segment" => {
            let r: SegmentRequest = match serde_json::from_slice(&req.body) {
                Ok(r) => r,
                Err(e) => return bad_request(e),
            };
            let img = match decode_image(&r.image_png_b64) {
                Ok(i) => i,
                Err(e) => return bad_request(e),
            };
            let mut mask = BinaryMask::new(img.width(), img.height()).expect("decoded image is non-empty");
            for [x, y] in r.positive {
                if x >= img.width() || y >= img.height() {
                    return bad_request(format!("click ({x}, {y}) out of bounds"));
                }
                mask.set(x, y, true);
            }
            let resp = SegmentResponse {
                mask_png_b64: mask_b64(&mask),
                model: Some(MODEL.into()),
            };
            MockReply::ok(serde_json::to_string(&resp).expect("serializable"))
        }
        "/v1/clicks" => {
            let r: ClicksRequest = match serde_json::from_slice(&req.body) {
                Ok(r) => r,
                Err(e) => return bad_request(e),
            };
            let img = match decode_image(&r.image_png_b64) {
                Ok(i) => i,
                Err(e) => return bad_request(e),
            };
            let clicks = ClickSet::from_coords(&[(img.width() / 2, img.height() / 2)], &[]);
            let resp = ClicksResponse {
                raw_text: serialize_clicks_text(&clicks),
                model: Some(MODEL.into()),
            };
            MockReply::ok(serde_json::to_string(&resp).expect("serializable"))
        }
        _ => MockReply::status(404),
    }
}
