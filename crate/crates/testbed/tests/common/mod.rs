#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{Ipv4Addr, SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;

use optislot::agent::{serve, AgentHandle, AgentSpec};
use optislot::clock::SimClock;
use optislot::netconf::{encode, Body, ErrorTag, FrameDecoder, RpcMessage, BASE_CAPABILITY};
use optislot::sim::{CmisLog, PortSpec, DEFAULT_EPOCH};
use optislot_core::LaserModel;

pub fn loopback() -> SocketAddr {
    SocketAddr::from((Ipv4Addr::LOCALHOST, 0))
}

/// One agent with constant-delay ports.
pub fn constant_agent(id: &str, ports: &[(&str, f64)], clock: Arc<SimClock>) -> AgentHandle {
    let ports = ports
        .iter()
        .enumerate()
        .map(|(i, (name, secs))| PortSpec { name: name.to_string(), model: LaserModel::constant(*secs, i as u64) })
        .collect();
    agent(id, ports, clock, Arc::new(CmisLog::discard()))
}

pub fn agent(id: &str, ports: Vec<PortSpec>, clock: Arc<SimClock>, log: Arc<CmisLog>) -> AgentHandle {
    serve(AgentSpec { whitebox_id: id.into(), listen: loopback(), ports, clock, log, epoch: DEFAULT_EPOCH }).unwrap()
}

/// A server that greets and then rejects every edit-config with `tag`.
pub fn rejecting_server(tag: ErrorTag) -> (SocketAddr, JoinHandle<()>) {
    let listener = TcpListener::bind(loopback()).unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        let Ok((mut stream, _)) = listener.accept() else { return };
        let hello = RpcMessage::new(1, Body::Hello { capabilities: vec![BASE_CAPABILITY.into()] });
        stream.write_all(&encode(&hello)).unwrap();
        let mut dec = FrameDecoder::new();
        let mut buf = [0u8; 4096];
        loop {
            while let Some(msg) = dec.next_message() {
                let msg = msg.unwrap();
                if let Body::EditConfig { .. } = msg.body {
                    let reply = RpcMessage::new(
                        msg.message_id,
                        Body::ErrorReply { tag, message: "rejected by test server".into() },
                    );
                    stream.write_all(&encode(&reply)).unwrap();
                }
            }
            match stream.read(&mut buf) {
                Ok(0) | Err(_) => return,
                Ok(n) => dec.push(&buf[..n]),
            }
        }
    });
    (addr, handle)
}
