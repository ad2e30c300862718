//! Framed TCP transport. Every peer gets one lazily connected writer
//! thread; inbound connections get one reader thread each.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, Sender};
use std::thread;
use std::time::Duration;

use rpmesh_core::wire::{Frame, WireError};

const CONNECT_TIMEOUT: Duration = Duration::from_millis(1000);

/// Reads whole frames off `stream`.
pub struct FrameReader<R> {
    inner: R,
    buf: Vec<u8>,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        FrameReader {
            inner,
            buf: Vec::with_capacity(4096),
        }
    }

    /// The next complete frame, or `None` at a clean end of stream.
    pub fn next_frame(&mut self) -> io::Result<Option<Vec<u8>>> {
        let mut chunk = [0u8; 16 * 1024];
        loop {
            match Frame::peek_len(&self.buf) {
                Ok(Some(total)) if self.buf.len() >= total => {
                    let rest = self.buf.split_off(total);
                    return Ok(Some(std::mem::replace(&mut self.buf, rest)));
                }
                Ok(_) => {}
                Err(e @ (WireError::BadMagic | WireError::PayloadTooLarge(_))) => {
                    return Err(io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
                }
                Err(e) => return Err(io::Error::other(e.to_string())),
            }
            let n = self.inner.read(&mut chunk)?;
            if n == 0 {
                return if self.buf.is_empty() {
                    Ok(None)
                } else {
                    Err(io::ErrorKind::UnexpectedEof.into())
                };
            }
            self.buf.extend_from_slice(&chunk[..n]);
        }
    }
}

pub fn connect(addr: &str, timeout: Duration) -> io::Result<TcpStream> {
    let mut last = io::Error::new(io::ErrorKind::NotFound, format!("{addr} did not resolve"));
    for a in addr.to_socket_addrs()? {
        match TcpStream::connect_timeout(&a, timeout) {
            Ok(s) => {
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Outbound frames by destination endpoint. Frames to an unreachable peer
/// are dropped; the engine's own timeouts take it from there.
#[derive(Default)]
pub struct Peers {
    writers: HashMap<String, Sender<Vec<u8>>>,
}

impl Peers {
    pub fn send(&mut self, to: &str, bytes: Vec<u8>) {
        let bytes = match self.writers.get(to) {
            Some(tx) => match tx.send(bytes) {
                Ok(()) => return,
                Err(e) => e.0,
            },
            None => bytes,
        };
        let (tx, rx) = mpsc::channel();
        let addr = to.to_string();
        thread::Builder::new()
            .name(format!("tx {addr}"))
            .spawn(move || writer(addr, rx))
            .expect("spawn writer thread");
        let _ = tx.send(bytes);
        self.writers.insert(to.to_string(), tx);
    }
}

fn writer(addr: String, rx: Receiver<Vec<u8>>) {
    let mut stream: Option<TcpStream> = None;
    for bytes in rx {
        for _attempt in 0..2 {
            if stream.is_none() {
                stream = connect(&addr, CONNECT_TIMEOUT).ok();
            }
            let Some(s) = stream.as_mut() else { break };
            if s.write_all(&bytes).is_ok() {
                break;
            }
            stream = None;
        }
    }
}
