//! Connection from the command line tool to a daemon.

use std::io::{self, Write};
use std::net::TcpStream;
use std::time::Duration;

use rpmesh_core::constants::SpaceConfig;
use rpmesh_core::id::NodeId;
use rpmesh_core::overlay::Contact;
use rpmesh_core::rp::{ClientCmd, ClientReply, Envelope, Msg, Packet};

use crate::net::{connect, FrameReader};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("cannot reach daemon at {addr}: {source}")]
    Connect { addr: String, source: io::Error },
    #[error("connection to daemon failed: {0}")]
    Io(#[from] io::Error),
    #[error("daemon closed the connection")]
    Closed,
    #[error("{0}")]
    Protocol(String),
}

pub struct Client {
    stream: TcpStream,
    reader: FrameReader<TcpStream>,
    digest: [u8; 8],
    next: u64,
}

impl Client {
    pub fn connect(addr: &str, space: SpaceConfig, timeout: Duration) -> Result<Client, ClientError> {
        let stream = connect(addr, Duration::from_secs(2)).map_err(|source| ClientError::Connect {
            addr: addr.to_string(),
            source,
        })?;
        stream.set_read_timeout(Some(timeout))?;
        let reader = FrameReader::new(stream.try_clone()?);
        Ok(Client {
            stream,
            reader,
            digest: space.digest(),
            next: 0,
        })
    }

    pub fn call(&mut self, cmd: ClientCmd) -> Result<ClientReply, ClientError> {
        self.next += 1;
        let req = self.next;
        let packet = Packet::new(
            Contact::new(NodeId::ZERO, "client"),
            Msg::Forward(Envelope::Request { req, cmd }),
        );
        let bytes = packet
            .encode(&self.digest)
            .map_err(|e| ClientError::Protocol(e.to_string()))?;
        self.stream.write_all(&bytes)?;
        loop {
            let frame = self.reader.next_frame()?.ok_or(ClientError::Closed)?;
            let p = Packet::decode(&frame, &self.digest).map_err(|e| ClientError::Protocol(e.to_string()))?;
            if let Msg::Forward(Envelope::Reply { req: r, reply }) = p.msg {
                if r == req {
                    return Ok(reply);
                }
            }
        }
    }
}
