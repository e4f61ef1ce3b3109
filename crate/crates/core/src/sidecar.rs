//! Client for an external inference process speaking newline-delimited JSON
//! over a local stream.
//!
//! Each request line is `{"id": <caption_id>, "text": <caption>}`; the
//! sidecar answers every request with one JSON line carrying the same id in
//! its `caption_id` field (a score or embedding record). Responses may arrive
//! in any order within a batch. Addresses containing a `/` are Unix socket
//! paths, anything else is a TCP `host:port`.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::TcpStream;
#[cfg(unix)]
use std::os::unix::net::UnixStream;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::Value;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
pub enum SidecarError {
    #[error("cannot connect to sidecar at {addr}: {source}")]
    Connect { addr: String, source: io::Error },
    #[error("sidecar i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("sidecar batch timed out after {0:?}")]
    Timeout(Duration),
    #[error("sidecar closed the stream")]
    Closed,
    #[error("bad sidecar response: {0}")]
    Protocol(String),
}

enum Stream {
    Tcp(TcpStream),
    #[cfg(unix)]
    Unix(UnixStream),
}

impl Stream {
    fn connect(addr: &str) -> io::Result<Self> {
        #[cfg(unix)]
        if addr.contains('/') {
            return UnixStream::connect(addr).map(Stream::Unix);
        }
        TcpStream::connect(addr).map(|s| {
            let _ = s.set_nodelay(true);
            Stream::Tcp(s)
        })
    }

    fn set_read_timeout(&self, t: Option<Duration>) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.set_read_timeout(t),
            #[cfg(unix)]
            Stream::Unix(s) => s.set_read_timeout(t),
        }
    }

    fn try_clone(&self) -> io::Result<Self> {
        Ok(match self {
            Stream::Tcp(s) => Stream::Tcp(s.try_clone()?),
            #[cfg(unix)]
            Stream::Unix(s) => Stream::Unix(s.try_clone()?),
        })
    }
}

impl Read for Stream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.read(buf),
            #[cfg(unix)]
            Stream::Unix(s) => s.read(buf),
        }
    }
}

impl Write for Stream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.write(buf),
            #[cfg(unix)]
            Stream::Unix(s) => s.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.flush(),
            #[cfg(unix)]
            Stream::Unix(s) => s.flush(),
        }
    }
}

struct Connection {
    writer: Stream,
    reader: BufReader<Stream>,
}

#[derive(Serialize)]
struct Request<'a> {
    id: i64,
    text: &'a str,
}

/// One connection, used serially. The connection is opened lazily and
/// dropped after any failure so the next batch reconnects.
pub struct SidecarClient {
    addr: String,
    timeout: Duration,
    conn: Mutex<Option<Connection>>,
}

impl SidecarClient {
    pub fn new(addr: impl Into<String>, timeout: Duration) -> Self {
        Self {
            addr: addr.into(),
            timeout,
            conn: Mutex::new(None),
        }
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    /// Sends one batch and returns the responses reordered to match `items`.
    pub fn request_batch(&self, items: &[(i64, &str)]) -> Result<Vec<Value>, SidecarError> {
        let mut guard = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        if guard.is_none() {
            let stream = Stream::connect(&self.addr).map_err(|source| SidecarError::Connect {
                addr: self.addr.clone(),
                source,
            })?;
            let reader = BufReader::new(stream.try_clone()?);
            *guard = Some(Connection {
                writer: stream,
                reader,
            });
        }
        let conn = guard.as_mut().expect("connection just established");
        let result = exchange(conn, items, self.timeout);
        if result.is_err() {
            *guard = None;
        }
        result
    }
}

fn exchange(
    conn: &mut Connection,
    items: &[(i64, &str)],
    timeout: Duration,
) -> Result<Vec<Value>, SidecarError> {
    let deadline = Instant::now() + timeout;
    let mut payload = Vec::new();
    for &(id, text) in items {
        serde_json::to_writer(&mut payload, &Request { id, text })
            .map_err(|e| SidecarError::Protocol(e.to_string()))?;
        payload.push(b'\n');
    }
    conn.writer.write_all(&payload)?;
    conn.writer.flush()?;

    let position: std::collections::HashMap<i64, usize> = items
        .iter()
        .enumerate()
        .map(|(i, (id, _))| (*id, i))
        .collect();
    let mut out: Vec<Option<Value>> = vec![None; items.len()];
    let mut received = 0;
    let mut line = String::new();
    while received < items.len() {
        let remaining = deadline
            .checked_duration_since(Instant::now())
            .filter(|d| !d.is_zero())
            .ok_or(SidecarError::Timeout(timeout))?;
        conn.reader.get_ref().set_read_timeout(Some(remaining))?;
        line.clear();
        match conn.reader.read_line(&mut line) {
            Ok(0) => return Err(SidecarError::Closed),
            Ok(_) => {}
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                return Err(SidecarError::Timeout(timeout))
            }
            Err(e) => return Err(e.into()),
        }
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| SidecarError::Protocol(e.to_string()))?;
        let id = value
            .get("caption_id")
            .and_then(Value::as_i64)
            .ok_or_else(|| SidecarError::Protocol("response lacks integer caption_id".into()))?;
        let slot = position
            .get(&id)
            .ok_or_else(|| SidecarError::Protocol(format!("unexpected caption_id {id}")))?;
        if out[*slot].replace(value).is_some() {
            return Err(SidecarError::Protocol(format!(
                "duplicate response for {id}"
            )));
        }
        received += 1;
    }
    Ok(out
        .into_iter()
        .map(|v| v.expect("all slots filled"))
        .collect())
}
