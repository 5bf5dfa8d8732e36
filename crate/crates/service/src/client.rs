//! Minimal blocking client for scripting the service: plain HTTP/1.1
//! requests, MJPEG stream parts and WebSocket binary frames. Intended for
//! tests and tooling, not as a general HTTP client.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use serde_json::Value;

const TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct Response {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Response {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or(Value::Null)
    }
}

fn connect(addr: SocketAddr) -> io::Result<TcpStream> {
    let s = TcpStream::connect_timeout(&addr, TIMEOUT)?;
    s.set_read_timeout(Some(TIMEOUT))?;
    s.set_nodelay(true)?;
    Ok(s)
}

fn send_head(s: &mut TcpStream, method: &str, path: &str, extra: &[(&str, String)], body: &[u8]) -> io::Result<()> {
    let mut req = format!("{method} {path} HTTP/1.1\r\nHost: localhost\r\n");
    for (k, v) in extra {
        req.push_str(&format!("{k}: {v}\r\n"));
    }
    if !body.is_empty() || method == "POST" {
        req.push_str(&format!("Content-Length: {}\r\n", body.len()));
    }
    req.push_str("\r\n");
    s.write_all(req.as_bytes())?;
    s.write_all(body)
}

fn read_head(r: &mut impl BufRead) -> io::Result<(u16, Vec<(String, String)>)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let status = line
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("bad status line {line:?}")))?;
    let mut headers = Vec::new();
    loop {
        line.clear();
        r.read_line(&mut line)?;
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            headers.push((k.trim().to_owned(), v.trim().to_owned()));
        }
    }
    Ok((status, headers))
}

fn find<'a>(headers: &'a [(String, String)], name: &str) -> Option<&'a str> {
    headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
}

/// Decodes a `Transfer-Encoding: chunked` body incrementally.
struct Chunked<R> {
    inner: R,
    left: usize,
    done: bool,
}

impl<R: BufRead> Read for Chunked<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.done || buf.is_empty() {
            return Ok(0);
        }
        if self.left == 0 {
            let mut line = String::new();
            self.inner.read_line(&mut line)?;
            let size = line.trim().split(';').next().unwrap_or("");
            self.left = usize::from_str_radix(size, 16)
                .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, format!("bad chunk size {line:?}")))?;
            if self.left == 0 {
                self.done = true;
                return Ok(0);
            }
        }
        let n = buf.len().min(self.left);
        let n = self.inner.read(&mut buf[..n])?;
        if n == 0 {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        self.left -= n;
        if self.left == 0 {
            let mut crlf = [0u8; 2];
            self.inner.read_exact(&mut crlf)?;
        }
        Ok(n)
    }
}

fn body_reader<'a>(r: BufReader<TcpStream>, headers: &[(String, String)]) -> Box<dyn BufRead + Send + 'a> {
    if find(headers, "transfer-encoding").is_some_and(|v| v.eq_ignore_ascii_case("chunked")) {
        Box::new(BufReader::new(Chunked {
            inner: r,
            left: 0,
            done: false,
        }))
    } else if let Some(n) = find(headers, "content-length").and_then(|v| v.parse::<u64>().ok()) {
        Box::new(BufReader::new(r.take(n)))
    } else {
        Box::new(r)
    }
}

pub fn request(addr: SocketAddr, method: &str, path: &str, body: Option<&Value>) -> io::Result<Response> {
    let mut s = connect(addr)?;
    let payload = body.map(|b| b.to_string().into_bytes()).unwrap_or_default();
    let mut extra = vec![("Connection", "close".to_owned())];
    if body.is_some() {
        extra.push(("Content-Type", "application/json".to_owned()));
    }
    send_head(&mut s, method, path, &extra, &payload)?;
    let mut r = BufReader::new(s);
    let (status, headers) = read_head(&mut r)?;
    let mut body = Vec::new();
    body_reader(r, &headers).read_to_end(&mut body)?;
    Ok(Response { status, headers, body })
}

pub fn get(addr: SocketAddr, path: &str) -> io::Result<Response> {
    request(addr, "GET", path, None)
}

pub fn post(addr: SocketAddr, path: &str, body: &Value) -> io::Result<Response> {
    request(addr, "POST", path, Some(body))
}

/// One part of an MJPEG stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamFrame {
    pub timestamp_ns: u64,
    pub width: u32,
    pub height: u32,
    pub jpeg: Vec<u8>,
}

/// Reads parts from a `multipart/x-mixed-replace` response.
pub struct MjpegStream {
    body: Box<dyn BufRead + Send>,
}

impl MjpegStream {
    /// Opens the stream; a non-200 answer is returned as `Err(Ok(response))`.
    pub fn open(addr: SocketAddr, path: &str) -> io::Result<Result<MjpegStream, Response>> {
        let mut s = connect(addr)?;
        send_head(&mut s, "GET", path, &[], &[])?;
        let mut r = BufReader::new(s);
        let (status, headers) = read_head(&mut r)?;
        let mut body = body_reader(r, &headers);
        if status != 200 {
            let mut b = Vec::new();
            body.read_to_end(&mut b)?;
            return Ok(Err(Response {
                status,
                headers,
                body: b,
            }));
        }
        Ok(Ok(MjpegStream { body }))
    }

    pub fn next_frame(&mut self) -> io::Result<StreamFrame> {
        // Skip to the boundary line.
        let mut line = String::new();
        loop {
            line.clear();
            if self.body.read_line(&mut line)? == 0 {
                return Err(io::ErrorKind::UnexpectedEof.into());
            }
            if line.starts_with("--") {
                break;
            }
        }
        let mut headers = Vec::new();
        loop {
            line.clear();
            self.body.read_line(&mut line)?;
            let l = line.trim_end();
            if l.is_empty() {
                break;
            }
            if let Some((k, v)) = l.split_once(':') {
                headers.push((k.trim().to_owned(), v.trim().to_owned()));
            }
        }
        let len: usize = find(&headers, "content-length")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "part without length"))?;
        let ts = find(&headers, "x-timestamp-ns").and_then(|v| v.parse().ok()).unwrap_or(0);
        let mut jpeg = vec![0u8; len];
        self.body.read_exact(&mut jpeg)?;
        let (width, height) = jpeg_size(&jpeg).unwrap_or((0, 0));
        Ok(StreamFrame {
            timestamp_ns: ts,
            width,
            height,
            jpeg,
        })
    }
}

/// Width and height from a baseline or progressive JPEG SOF marker.
pub fn jpeg_size(jpeg: &[u8]) -> Option<(u32, u32)> {
    let mut i = 2;
    while i + 9 < jpeg.len() {
        if jpeg[i] != 0xFF {
            return None;
        }
        let marker = jpeg[i + 1];
        let len = usize::from(u16::from_be_bytes([jpeg[i + 2], jpeg[i + 3]]));
        if matches!(marker, 0xC0..=0xC3) {
            let h = u16::from_be_bytes([jpeg[i + 5], jpeg[i + 6]]);
            let w = u16::from_be_bytes([jpeg[i + 7], jpeg[i + 8]]);
            return Some((u32::from(w), u32::from(h)));
        }
        i += 2 + len;
    }
    None
}

/// Receives binary messages from the view WebSocket.
pub struct WsStream {
    stream: BufReader<TcpStream>,
}

impl WsStream {
    /// Performs the upgrade; a non-101 answer is returned as `Err(Ok(response))`.
    pub fn open(addr: SocketAddr, path: &str) -> io::Result<Result<WsStream, Response>> {
        let mut s = connect(addr)?;
        let extra = [
            ("Connection", "Upgrade".to_owned()),
            ("Upgrade", "websocket".to_owned()),
            ("Sec-WebSocket-Version", "13".to_owned()),
            ("Sec-WebSocket-Key", "dGhlIHNhbXBsZSBub25jZQ==".to_owned()),
        ];
        send_head(&mut s, "GET", path, &extra, &[])?;
        let mut r = BufReader::new(s);
        let (status, headers) = read_head(&mut r)?;
        if status != 101 {
            let mut b = Vec::new();
            body_reader(r, &headers).read_to_end(&mut b)?;
            return Ok(Err(Response {
                status,
                headers,
                body: b,
            }));
        }
        Ok(Ok(WsStream { stream: r }))
    }

    /// Next binary message payload; control frames are skipped.
    pub fn next_binary(&mut self) -> io::Result<Vec<u8>> {
        let mut message = Vec::new();
        loop {
            let mut h = [0u8; 2];
            self.stream.read_exact(&mut h)?;
            let fin = h[0] & 0x80 != 0;
            let opcode = h[0] & 0x0F;
            let masked = h[1] & 0x80 != 0;
            let mut len = u64::from(h[1] & 0x7F);
            if len == 126 {
                let mut b = [0u8; 2];
                self.stream.read_exact(&mut b)?;
                len = u64::from(u16::from_be_bytes(b));
            } else if len == 127 {
                let mut b = [0u8; 8];
                self.stream.read_exact(&mut b)?;
                len = u64::from_be_bytes(b);
            }
            let mut mask = [0u8; 4];
            if masked {
                self.stream.read_exact(&mut mask)?;
            }
            let mut payload = vec![0u8; len as usize];
            self.stream.read_exact(&mut payload)?;
            if masked {
                for (i, b) in payload.iter_mut().enumerate() {
                    *b ^= mask[i % 4];
                }
            }
            match opcode {
                0x8 => return Err(io::ErrorKind::ConnectionAborted.into()),
                0x9 | 0xA => continue,
                _ => {
                    message.extend_from_slice(&payload);
                    if fin {
                        return Ok(message);
                    }
                }
            }
        }
    }

    /// Next message decoded as a stream frame.
    pub fn next_frame(&mut self) -> io::Result<StreamFrame> {
        let m = self.next_binary()?;
        if m.len() < 16 {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "short frame message"));
        }
        Ok(StreamFrame {
            timestamp_ns: u64::from_le_bytes(m[..8].try_into().unwrap()),
            width: u32::from_le_bytes(m[8..12].try_into().unwrap()),
            height: u32::from_le_bytes(m[12..16].try_into().unwrap()),
            jpeg: m[16..].to_vec(),
        })
    }
}
