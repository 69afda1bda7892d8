mod common;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::constant_agent;
use optislot::client::{ClientError, EditResult, NetconfClient};
use optislot::clock::{ClockMode, SimClock};
use optislot::netconf::{decode, encode, Body, ErrorTag, FrameDecoder, RpcMessage, DELIMITER};
use optislot_core::{FrequencySlot, SimTime};
use proptest::prelude::*;

const TIMEOUT: Option<Duration> = Some(Duration::from_secs(10));

#[test]
fn soak_thousand_round_trips_and_one_bad_session() {
    let clock = Arc::new(SimClock::logical());
    let agent = constant_agent("wb0", &[("Ethernet0", 3.513673)], clock);
    let mut client = NetconfClient::connect(agent.addr(), TIMEOUT).unwrap();
    let started = Instant::now();
    for i in 0..1000 {
        let slot = FrequencySlot::new(i % 49).unwrap();
        match client.edit_config("Ethernet0", slot.frequency_ghz()).unwrap() {
            EditResult::Configured { config_time_s } => assert_eq!(format!("{config_time_s:.6}"), "3.513673"),
            other => panic!("round trip {i}: {other:?}"),
        }
        if i == 500 {
            let mut bad = NetconfClient::connect(agent.addr(), TIMEOUT).unwrap();
            bad.send_raw(b"<rpc message-id=\"9\"><edit-config><port>x</edit-config></rpc>]]>]]>").unwrap();
            assert!(bad.receive().is_err());
        }
    }
    assert!(started.elapsed() < Duration::from_secs(10));
    let tele = client.telemetry(None).unwrap();
    assert_eq!(tele.len(), 100);
    assert!(tele.iter().all(|r| (r.config_time_s - 3.513673).abs() < 1e-9));
}

#[test]
fn agent_rejections_keep_the_session() {
    let clock = Arc::new(SimClock::logical());
    let agent = constant_agent("wb0", &[("Ethernet0", 2.0), ("Ethernet8", 3.0)], clock);
    let mut c = NetconfClient::connect(agent.addr(), TIMEOUT).unwrap();
    assert!(c.peer_capabilities().iter().any(|s| s.contains("netconf:base")));

    let r = c.edit_config("Ethernet4", 192500).unwrap();
    assert!(matches!(r, EditResult::Rejected { tag: ErrorTag::BadElement, .. }), "{r:?}");
    let r = c.edit_config("Ethernet0", 192550).unwrap();
    assert!(matches!(r, EditResult::Rejected { tag: ErrorTag::InvalidValue, .. }), "{r:?}");
    let r = c.edit_config("Ethernet0", 196200).unwrap();
    assert!(matches!(r, EditResult::Rejected { tag: ErrorTag::InvalidValue, .. }), "{r:?}");
    let r = c
        .request(Body::EditConfig { port: "Ethernet0".into(), frequency_ghz: 192500, grid_ghz: 50 })
        .unwrap();
    assert!(matches!(r, Body::ErrorReply { tag: ErrorTag::InvalidValue, .. }), "{r:?}");

    assert_eq!(c.edit_config("Ethernet8", 192500).unwrap(), EditResult::Configured { config_time_s: 3.0 });
    assert_eq!(c.edit_config("Ethernet0", 191300).unwrap(), EditResult::Configured { config_time_s: 2.0 });
    let only8 = c.telemetry(Some("Ethernet8")).unwrap();
    assert_eq!(only8.len(), 1);
    assert_eq!(only8[0].slot, FrequencySlot::new(12).unwrap());
    assert_eq!(only8[0].transceiver.to_string(), "wb0/Ethernet8");
    assert_eq!(agent.telemetry().len(), 2);
}

#[test]
fn request_before_hello_closes_the_session() {
    let agent = constant_agent("wb0", &[("Ethernet0", 1.0)], Arc::new(SimClock::logical()));
    let mut raw = TcpStream::connect(agent.addr()).unwrap();
    raw.set_read_timeout(TIMEOUT).unwrap();
    let edit = RpcMessage::new(2, Body::EditConfig { port: "Ethernet0".into(), frequency_ghz: 192500, grid_ghz: 100 });
    raw.write_all(&encode(&edit)).unwrap();
    let mut got = Vec::new();
    raw.read_to_end(&mut got).unwrap();
    let msgs = decode(&got).unwrap();
    assert_eq!(msgs.len(), 1);
    assert!(matches!(msgs[0].body, Body::Hello { .. }));

    let mut ok = NetconfClient::connect(agent.addr(), TIMEOUT).unwrap();
    assert!(matches!(ok.edit_config("Ethernet0", 192500).unwrap(), EditResult::Configured { .. }));
}

#[test]
fn shutdown_drains_in_flight_configuration() {
    let clock = Arc::new(SimClock::new(ClockMode::Scaled { factor: 10.0 }, SimTime::ZERO));
    let mut agent = constant_agent("wb0", &[("Ethernet0", 2.0)], clock);
    let addr = agent.addr();
    let client = std::thread::spawn(move || {
        let mut c = NetconfClient::connect(addr, TIMEOUT).unwrap();
        let first = c.edit_config("Ethernet0", 192500);
        let after = c.edit_config("Ethernet0", 192500);
        (first, after)
    });
    std::thread::sleep(Duration::from_millis(60));
    agent.shutdown();
    assert!(!agent.is_running());
    agent.shutdown();
    let (first, after) = client.join().unwrap();
    assert_eq!(first.unwrap(), EditResult::Configured { config_time_s: 2.0 });
    assert!(matches!(after, Err(ClientError::Closed | ClientError::Io(_))), "{after:?}");
    assert!(TcpStream::connect_timeout(&addr, Duration::from_millis(200)).is_err());
}

fn arb_body() -> impl Strategy<Value = Body> {
    // element text is compared after trimming, as the codec does
    let text = || "[ -~]{0,24}".prop_map(|s: String| s.trim().to_string());
    prop_oneof![
        prop::collection::vec(text(), 0..3).prop_map(|capabilities| Body::Hello { capabilities }),
        (text(), any::<u32>(), any::<u32>())
            .prop_map(|(port, frequency_ghz, grid_ghz)| Body::EditConfig { port, frequency_ghz, grid_ghz }),
        proptest::option::of(text()).prop_map(|port| Body::GetTelemetry { port }),
        proptest::option::of(1u64..100_000_000).prop_map(|us| Body::OkReply { config_time_s: us.map(|u| u as f64 / 1e6) }),
        (0usize..3, text()).prop_map(|(t, message)| Body::ErrorReply {
            tag: [ErrorTag::InvalidValue, ErrorTag::BadElement, ErrorTag::OperationFailed][t],
            message,
        }),
    ]
}

proptest! {
    #[test]
    fn framing_survives_any_chunking(
        bodies in prop::collection::vec((1u64..u64::MAX, arb_body()), 1..6),
        cuts in prop::collection::vec(1usize..64, 0..40),
    ) {
        let msgs: Vec<RpcMessage> = bodies.into_iter().map(|(id, b)| RpcMessage::new(id, b)).collect();
        let wire: Vec<u8> = msgs.iter().flat_map(encode).collect();
        prop_assert_eq!(wire.windows(DELIMITER.len()).filter(|w| *w == DELIMITER).count(), msgs.len());

        let mut dec = FrameDecoder::new();
        let mut out = Vec::new();
        let mut rest = &wire[..];
        for c in cuts.into_iter().chain(std::iter::repeat(17)) {
            if rest.is_empty() {
                break;
            }
            let (head, tail) = rest.split_at(c.min(rest.len()));
            dec.push(head);
            while let Some(m) = dec.next_message() {
                out.push(m.unwrap());
            }
            rest = tail;
        }
        prop_assert_eq!(dec.pending(), 0);
        prop_assert_eq!(out, msgs);
    }
}
