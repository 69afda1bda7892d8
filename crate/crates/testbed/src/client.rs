//! Client side of a netconf-lite session.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use thiserror::Error;

use crate::netconf::{encode, Body, ErrorTag, FrameDecoder, ProtocolError, RpcMessage, BASE_CAPABILITY, PLUGGABLE_CAPABILITY};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("session closed by peer")]
    Closed,
    #[error("unexpected message: {0}")]
    Unexpected(String),
}

/// Outcome of an edit-config as reported by the agent.
#[derive(Debug, Clone, PartialEq)]
pub enum EditResult {
    Configured { config_time_s: f64 },
    Rejected { tag: ErrorTag, message: String },
}

pub struct NetconfClient {
    stream: TcpStream,
    decoder: FrameDecoder,
    next_id: u64,
    peer_capabilities: Vec<String>,
}

impl NetconfClient {
    /// Connect and exchange hellos.
    pub fn connect(addr: SocketAddr, timeout: Option<Duration>) -> Result<Self, ClientError> {
        let stream = match timeout {
            Some(t) => TcpStream::connect_timeout(&addr, t)?,
            None => TcpStream::connect(addr)?,
        };
        stream.set_nodelay(true)?;
        stream.set_read_timeout(timeout)?;
        let mut client = NetconfClient { stream, decoder: FrameDecoder::new(), next_id: 1, peer_capabilities: Vec::new() };
        client.send(&RpcMessage::new(
            1,
            Body::Hello { capabilities: vec![BASE_CAPABILITY.into(), PLUGGABLE_CAPABILITY.into()] },
        ))?;
        match client.receive()? {
            RpcMessage { body: Body::Hello { capabilities }, .. } => client.peer_capabilities = capabilities,
            other => return Err(ClientError::Unexpected(format!("{other:?}"))),
        }
        Ok(client)
    }

    pub fn peer_capabilities(&self) -> &[String] {
        &self.peer_capabilities
    }

    pub fn send(&mut self, message: &RpcMessage) -> Result<(), ClientError> {
        self.stream.write_all(&encode(message))?;
        Ok(())
    }

    /// Raw bytes, for exercising the server with malformed input.
    pub fn send_raw(&mut self, bytes: &[u8]) -> Result<(), ClientError> {
        self.stream.write_all(bytes)?;
        Ok(())
    }

    pub fn receive(&mut self) -> Result<RpcMessage, ClientError> {
        let mut buf = [0u8; 4096];
        loop {
            if let Some(msg) = self.decoder.next_message() {
                return Ok(msg?);
            }
            let n = self.stream.read(&mut buf)?;
            if n == 0 {
                return Err(ClientError::Closed);
            }
            self.decoder.push(&buf[..n]);
        }
    }

    /// Send a request and wait for the reply carrying the same message-id.
    pub fn request(&mut self, body: Body) -> Result<Body, ClientError> {
        self.next_id += 1;
        let id = self.next_id;
        self.send(&RpcMessage::new(id, body))?;
        let reply = self.receive()?;
        if reply.message_id != id || !reply.is_reply() {
            return Err(ClientError::Unexpected(format!("expected reply to {id}, got {reply:?}")));
        }
        Ok(reply.body)
    }

    pub fn edit_config(&mut self, port: &str, frequency_ghz: u32) -> Result<EditResult, ClientError> {
        let body = Body::EditConfig { port: port.into(), frequency_ghz, grid_ghz: optislot_core::GRID_SPACING_GHZ };
        match self.request(body)? {
            Body::OkReply { config_time_s: Some(t) } => Ok(EditResult::Configured { config_time_s: t }),
            Body::ErrorReply { tag, message } => Ok(EditResult::Rejected { tag, message }),
            other => Err(ClientError::Unexpected(format!("{other:?}"))),
        }
    }

    pub fn telemetry(&mut self, port: Option<&str>) -> Result<Vec<optislot_core::FeedbackRecord>, ClientError> {
        match self.request(Body::GetTelemetry { port: port.map(str::to_string) })? {
            Body::TelemetryReply { records } => Ok(records),
            other => Err(ClientError::Unexpected(format!("{other:?}"))),
        }
    }
}
