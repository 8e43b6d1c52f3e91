//! Client for an external embedding service over TCP.
//!
//! Framing is line based, UTF-8, one request per line:
//!
//! ```text
//! -> EMBED <text>\n          text escaped as in the file formats (\\ \t \n \r)
//! <- OK <v1> <v2> ... <vD>\n
//! <- ERR <message>\n
//! ```
//!
//! The connection is opened on first use and kept for later requests.
//! [`serve_connection`] answers the same protocol from any [`Embedder`] and
//! is what the tests run against.

use std::cell::RefCell;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use diaglab_core::rewards::{Embedder, EmbeddingVector, RewardError};

use crate::codec::{escape, join_floats, unescape};

pub struct SocketEmbedder {
    addr: String,
    dim: usize,
    timeout: Duration,
    conn: RefCell<Option<BufReader<TcpStream>>>,
}

impl SocketEmbedder {
    pub fn new(addr: impl Into<String>, dim: usize, timeout: Duration) -> Self {
        Self { addr: addr.into(), dim, timeout, conn: RefCell::new(None) }
    }

    fn connect(&self) -> std::io::Result<BufReader<TcpStream>> {
        let addr = self
            .addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, "address did not resolve"))?;
        let stream = TcpStream::connect_timeout(&addr, self.timeout)?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_write_timeout(Some(self.timeout))?;
        Ok(BufReader::new(stream))
    }

    fn request(&self, text: &str) -> Result<String, RewardError> {
        let fail = |e: std::io::Error| RewardError::Embedding(format!("{}: {e}", self.addr));
        let mut slot = self.conn.borrow_mut();
        if slot.is_none() {
            *slot = Some(self.connect().map_err(fail)?);
        }
        let conn = slot.as_mut().expect("connected above");
        let result = (|| {
            conn.get_mut().write_all(format!("EMBED {}\n", escape(text)).as_bytes())?;
            let mut line = String::new();
            if conn.read_line(&mut line)? == 0 {
                return Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "server closed connection"));
            }
            Ok(line)
        })();
        if result.is_err() {
            *slot = None;
        }
        result.map_err(fail)
    }
}

impl Embedder for SocketEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RewardError> {
        let line = self.request(text)?;
        let line = line.trim_end_matches(['\n', '\r']);
        if let Some(msg) = line.strip_prefix("ERR ") {
            return Err(RewardError::Embedding(msg.into()));
        }
        let body = line
            .strip_prefix("OK")
            .ok_or_else(|| RewardError::Embedding(format!("unexpected reply {line:?}")))?;
        let values = body
            .split_ascii_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| RewardError::Embedding(format!("bad number in reply: {e}")))?;
        if values.len() != self.dim {
            return Err(RewardError::DimensionMismatch(values.len(), self.dim));
        }
        Ok(EmbeddingVector { values })
    }
}

/// Answers requests on one connection until the peer closes it.
pub fn serve_connection(stream: TcpStream, embedder: &dyn Embedder) -> std::io::Result<()> {
    let mut writer = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        let reply = match line.strip_prefix("EMBED ").map(unescape) {
            None => "ERR expected EMBED <text>".to_string(),
            Some(Err(e)) => format!("ERR {e}"),
            Some(Ok(text)) => match embedder.embed(&text) {
                Ok(v) => format!("OK {}", join_floats(&v.values)),
                Err(e) => format!("ERR {e}"),
            },
        };
        writer.write_all(reply.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
