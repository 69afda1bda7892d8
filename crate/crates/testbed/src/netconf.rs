//! netconf-lite: XML RPC messages framed by the `]]>]]>` end-of-message marker.

use std::fmt::{self, Write as _};

use optislot_core::slot::frequency_to_slot;
use optislot_core::{FeedbackRecord, SimTime, TransceiverId};
use quick_xml::escape::{escape, resolve_predefined_entity};
use quick_xml::events::Event;
use quick_xml::Reader;
use thiserror::Error;

pub const DELIMITER: &[u8] = b"]]>]]>";
/// Upper bound on one framed document.
pub const MAX_FRAME_BYTES: usize = 1 << 20;
pub const BASE_CAPABILITY: &str = "urn:ietf:params:netconf:base:1.0";
pub const PLUGGABLE_CAPABILITY: &str = "urn:optislot:pluggable-laser:1.0";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("protocol error: {reason} in document {document:?}")]
pub struct ProtocolError {
    pub reason: String,
    pub document: String,
}

impl ProtocolError {
    fn new(reason: impl Into<String>, document: &str) -> Self {
        ProtocolError { reason: reason.into(), document: document.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorTag {
    /// Off-grid or out-of-range frequency.
    InvalidValue,
    /// Unknown port.
    BadElement,
    /// Simulator failure.
    OperationFailed,
}

impl ErrorTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorTag::InvalidValue => "invalid-value",
            ErrorTag::BadElement => "bad-element",
            ErrorTag::OperationFailed => "operation-failed",
        }
    }

    fn parse(s: &str) -> Option<ErrorTag> {
        match s {
            "invalid-value" => Some(ErrorTag::InvalidValue),
            "bad-element" => Some(ErrorTag::BadElement),
            "operation-failed" => Some(ErrorTag::OperationFailed),
            _ => None,
        }
    }
}

impl fmt::Display for ErrorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Hello { capabilities: Vec<String> },
    EditConfig { port: String, frequency_ghz: u32, grid_ghz: u32 },
    GetTelemetry { port: Option<String> },
    OkReply { config_time_s: Option<f64> },
    TelemetryReply { records: Vec<FeedbackRecord> },
    ErrorReply { tag: ErrorTag, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpcMessage {
    pub message_id: u64,
    pub body: Body,
}

impl RpcMessage {
    pub fn new(message_id: u64, body: Body) -> Self {
        RpcMessage { message_id, body }
    }

    pub fn is_reply(&self) -> bool {
        matches!(self.body, Body::OkReply { .. } | Body::TelemetryReply { .. } | Body::ErrorReply { .. })
    }
}

/// Serialise one message, delimiter included.
pub fn encode(message: &RpcMessage) -> Vec<u8> {
    let id = message.message_id;
    let mut s = String::new();
    match &message.body {
        Body::Hello { capabilities } => {
            write!(s, r#"<hello message-id="{id}"><capabilities>"#).unwrap();
            for c in capabilities {
                write!(s, "<capability>{}</capability>", escape(c.as_str())).unwrap();
            }
            s.push_str("</capabilities></hello>");
        }
        Body::EditConfig { port, frequency_ghz, grid_ghz } => {
            write!(
                s,
                r#"<rpc message-id="{id}"><edit-config><target><running/></target><config><pluggable><id>{}</id><laser-frequency-ghz>{frequency_ghz}</laser-frequency-ghz><grid-ghz>{grid_ghz}</grid-ghz></pluggable></config></edit-config></rpc>"#,
                escape(port.as_str())
            )
            .unwrap();
        }
        Body::GetTelemetry { port } => {
            write!(s, r#"<rpc message-id="{id}"><get-telemetry>"#).unwrap();
            if let Some(port) = port {
                write!(s, "<id>{}</id>", escape(port.as_str())).unwrap();
            }
            s.push_str("</get-telemetry></rpc>");
        }
        Body::OkReply { config_time_s } => {
            write!(s, r#"<rpc-reply message-id="{id}"><ok/>"#).unwrap();
            if let Some(t) = config_time_s {
                write!(s, "<config-time-seconds>{t:.6}</config-time-seconds>").unwrap();
            }
            s.push_str("</rpc-reply>");
        }
        Body::TelemetryReply { records } => {
            write!(s, r#"<rpc-reply message-id="{id}"><telemetry>"#).unwrap();
            for r in records {
                write!(
                    s,
                    "<record><whitebox>{}</whitebox><port>{}</port><frequency-ghz>{}</frequency-ghz><config-time-seconds>{:.6}</config-time-seconds><time-us>{}</time-us></record>",
                    escape(r.transceiver.whitebox.as_str()),
                    escape(r.transceiver.port.as_str()),
                    r.slot.frequency_ghz(),
                    r.config_time_s,
                    r.wall_time.as_micros()
                )
                .unwrap();
            }
            s.push_str("</telemetry></rpc-reply>");
        }
        Body::ErrorReply { tag, message } => {
            write!(
                s,
                r#"<rpc-reply message-id="{id}"><rpc-error><error-tag>{}</error-tag><error-message>{}</error-message></rpc-error></rpc-reply>"#,
                tag.as_str(),
                escape(message.as_str())
            )
            .unwrap();
        }
    }
    let mut bytes = s.into_bytes();
    bytes.extend_from_slice(DELIMITER);
    bytes
}

/// Per-connection reassembly buffer.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        FrameDecoder::default()
    }

    pub fn push(&mut self, data: &[u8]) {
        self.buf.extend_from_slice(data);
    }

    /// Bytes received but not yet terminated by a delimiter.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Next complete message, if one has fully arrived.
    pub fn next_message(&mut self) -> Option<Result<RpcMessage, ProtocolError>> {
        let Some(end) = find(&self.buf, DELIMITER) else {
            if self.buf.len() > MAX_FRAME_BYTES {
                let doc = String::from_utf8_lossy(&self.buf[..256]).into_owned();
                self.buf.clear();
                return Some(Err(ProtocolError::new("frame exceeds size limit", &doc)));
            }
            return None;
        };
        let frame: Vec<u8> = self.buf.drain(..end + DELIMITER.len()).take(end).collect();
        Some(decode_document(&frame))
    }
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Decode a complete byte stream. Trailing bytes without a delimiter are ignored.
pub fn decode(bytes: &[u8]) -> Result<Vec<RpcMessage>, ProtocolError> {
    let mut decoder = FrameDecoder::new();
    decoder.push(bytes);
    std::iter::from_fn(|| decoder.next_message()).collect()
}

/// Parse one document (without its delimiter).
pub fn decode_document(frame: &[u8]) -> Result<RpcMessage, ProtocolError> {
    let text = std::str::from_utf8(frame)
        .map_err(|_| ProtocolError::new("document is not UTF-8", &String::from_utf8_lossy(frame)))?;
    let err = |reason: &str| ProtocolError::new(reason, text);
    let root = parse_tree(text).map_err(|e| err(&e))?;
    interpret(&root).map_err(|e| err(&e))
}

#[derive(Debug, Default)]
struct Node {
    name: String,
    attrs: Vec<(String, String)>,
    children: Vec<Node>,
    text: String,
}

fn parse_tree(text: &str) -> Result<Node, String> {
    let mut reader = Reader::from_str(text);
    let mut stack: Vec<Node> = Vec::new();
    let mut root: Option<Node> = None;

    let open = |e: &quick_xml::events::BytesStart<'_>| -> Result<Node, String> {
        let name = e.name().as_ref().to_string();
        let mut attrs = Vec::new();
        for a in e.attributes() {
            let a = a.map_err(|e| e.to_string())?;
            let key = a.key.as_ref().to_string();
            let value = a.normalized_value(quick_xml::XmlVersion::Implicit1_0).map_err(|e| e.to_string())?.into_owned();
            attrs.push((key, value));
        }
        Ok(Node { name, attrs, ..Node::default() })
    };

    loop {
        let event = reader.read_event().map_err(|e| e.to_string())?;
        let text_target = |stack: &mut Vec<Node>, s: &str| -> Result<(), String> {
            match stack.last_mut() {
                Some(node) => {
                    node.text.push_str(s);
                    Ok(())
                }
                None if s.trim().is_empty() => Ok(()),
                None => Err("text outside the root element".into()),
            }
        };
        match event {
            Event::Start(e) => {
                if root.is_some() {
                    return Err("more than one root element".into());
                }
                stack.push(open(&e)?);
            }
            Event::Empty(e) => {
                if root.is_some() {
                    return Err("more than one root element".into());
                }
                let node = open(&e)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(node),
                    None => root = Some(node),
                }
            }
            Event::End(_) => {
                let node = stack.pop().ok_or("unbalanced end tag")?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(node),
                    None => root = Some(node),
                }
            }
            Event::Text(t) => text_target(&mut stack, &t.xml10_content())?,
            Event::CData(c) => text_target(&mut stack, &c.xml10_content())?,
            Event::GeneralRef(r) => {
                let resolved = match r.resolve_char_ref().map_err(|e| e.to_string())? {
                    Some(c) => c.to_string(),
                    None => resolve_predefined_entity(&r)
                        .ok_or_else(|| format!("unknown entity &{};", &*r))?
                        .to_string(),
                };
                text_target(&mut stack, &resolved)?
            }
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) => {}
            Event::DocType(_) => return Err("DOCTYPE not allowed".into()),
            Event::Eof => break,
        }
    }
    if !stack.is_empty() {
        return Err("unclosed element".into());
    }
    root.ok_or_else(|| "empty document".into())
}

impl Node {
    fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Children must come from `allowed`, each at most once unless `repeat` lists it.
    fn check_children(&self, allowed: &[&str], repeat: &[&str]) -> Result<(), String> {
        for (i, c) in self.children.iter().enumerate() {
            if !allowed.contains(&c.name.as_str()) {
                return Err(format!("unknown element <{}> in <{}>", c.name, self.name));
            }
            if !repeat.contains(&c.name.as_str()) && self.children[..i].iter().any(|p| p.name == c.name) {
                return Err(format!("duplicate element <{}> in <{}>", c.name, self.name));
            }
        }
        if !self.children.is_empty() && !self.text.trim().is_empty() {
            return Err(format!("unexpected text in <{}>", self.name));
        }
        Ok(())
    }

    fn child(&self, name: &str) -> Option<&Node> {
        self.children.iter().find(|c| c.name == name)
    }

    fn require(&self, name: &str) -> Result<&Node, String> {
        self.child(name).ok_or_else(|| format!("missing <{name}> in <{}>", self.name))
    }

    fn leaf(&self) -> Result<&str, String> {
        if !self.children.is_empty() {
            return Err(format!("<{}> must contain text only", self.name));
        }
        Ok(self.text.trim())
    }

    fn leaf_of(&self, name: &str) -> Result<&str, String> {
        self.require(name)?.leaf()
    }

    fn number<T: std::str::FromStr>(&self, name: &str) -> Result<T, String> {
        let text = self.leaf_of(name)?;
        text.parse().map_err(|_| format!("bad number {text:?} in <{name}>"))
    }

    fn empty(&self) -> Result<(), String> {
        if self.children.is_empty() && self.text.trim().is_empty() {
            Ok(())
        } else {
            Err(format!("<{}> must be empty", self.name))
        }
    }
}

fn interpret(root: &Node) -> Result<RpcMessage, String> {
    let message_id: u64 = root
        .attr("message-id")
        .ok_or("missing message-id")?
        .parse()
        .map_err(|_| "bad message-id")?;
    if message_id == 0 {
        return Err("message-id must be positive".into());
    }
    let body = match root.name.as_str() {
        "hello" => {
            root.check_children(&["capabilities"], &[])?;
            let mut capabilities = Vec::new();
            if let Some(caps) = root.child("capabilities") {
                caps.check_children(&["capability"], &["capability"])?;
                for c in &caps.children {
                    capabilities.push(c.leaf()?.to_string());
                }
            }
            Body::Hello { capabilities }
        }
        "rpc" => {
            root.check_children(&["edit-config", "get-telemetry"], &[])?;
            let [op] = root.children.as_slice() else {
                return Err("<rpc> needs exactly one operation".into());
            };
            match op.name.as_str() {
                "edit-config" => {
                    op.check_children(&["target", "config"], &[])?;
                    let target = op.require("target")?;
                    target.check_children(&["running"], &[])?;
                    target.require("running")?.empty()?;
                    let config = op.require("config")?;
                    config.check_children(&["pluggable"], &[])?;
                    let p = config.require("pluggable")?;
                    p.check_children(&["id", "laser-frequency-ghz", "grid-ghz"], &[])?;
                    Body::EditConfig {
                        port: p.leaf_of("id")?.to_string(),
                        frequency_ghz: p.number("laser-frequency-ghz")?,
                        grid_ghz: p.number("grid-ghz")?,
                    }
                }
                _ => {
                    op.check_children(&["id"], &[])?;
                    let port = op.child("id").map(|n| n.leaf().map(str::to_string)).transpose()?;
                    Body::GetTelemetry { port }
                }
            }
        }
        "rpc-reply" => {
            if let Some(err) = root.child("rpc-error") {
                root.check_children(&["rpc-error"], &[])?;
                err.check_children(&["error-tag", "error-message"], &[])?;
                let tag = err.leaf_of("error-tag")?;
                Body::ErrorReply {
                    tag: ErrorTag::parse(tag).ok_or_else(|| format!("unknown error-tag {tag:?}"))?,
                    message: err.child("error-message").map(|m| m.leaf().map(str::to_string)).transpose()?.unwrap_or_default(),
                }
            } else if let Some(tel) = root.child("telemetry") {
                root.check_children(&["telemetry"], &[])?;
                tel.check_children(&["record"], &["record"])?;
                let records = tel.children.iter().map(record).collect::<Result<_, _>>()?;
                Body::TelemetryReply { records }
            } else {
                root.check_children(&["ok", "config-time-seconds"], &[])?;
                root.require("ok")?.empty()?;
                let config_time_s = match root.child("config-time-seconds") {
                    Some(_) => Some(root.number::<f64>("config-time-seconds")?),
                    None => None,
                };
                Body::OkReply { config_time_s }
            }
        }
        other => return Err(format!("unknown root element <{other}>")),
    };
    Ok(RpcMessage { message_id, body })
}

fn record(node: &Node) -> Result<FeedbackRecord, String> {
    node.check_children(&["whitebox", "port", "frequency-ghz", "config-time-seconds", "time-us"], &[])?;
    let transceiver = TransceiverId::new(node.leaf_of("whitebox")?, node.leaf_of("port")?).map_err(|e| e.to_string())?;
    let slot = frequency_to_slot(node.number("frequency-ghz")?).map_err(|e| e.to_string())?;
    FeedbackRecord::new(transceiver, slot, node.number("config-time-seconds")?, SimTime(node.number("time-us")?))
        .map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use optislot_core::FrequencySlot;

    fn edit(id: u64) -> RpcMessage {
        RpcMessage::new(id, Body::EditConfig { port: "Ethernet0".into(), frequency_ghz: 192_500, grid_ghz: 100 })
    }

    #[test]
    fn edit_config_document() {
        let bytes = encode(&edit(1));
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.ends_with("</rpc>]]>]]>"));
        assert!(text.contains("<pluggable><id>Ethernet0</id><laser-frequency-ghz>192500</laser-frequency-ghz><grid-ghz>100</grid-ghz></pluggable>"));
        assert_eq!(decode(&bytes).unwrap(), vec![edit(1)]);
    }

    #[test]
    fn pretty_printed_edit_config_decodes() {
        let doc = r#"<rpc message-id="1">
  <edit-config>
    <target><running/></target>
    <config>
      <pluggable>
        <id>Ethernet0</id>
        <laser-frequency-ghz>192500</laser-frequency-ghz>
        <grid-ghz>100</grid-ghz>
      </pluggable>
    </config>
  </edit-config>
</rpc>]]>]]>"#;
        assert_eq!(decode(doc.as_bytes()).unwrap(), vec![edit(1)]);
    }

    #[test]
    fn ok_reply_is_bit_exact() {
        let m = RpcMessage::new(1, Body::OkReply { config_time_s: Some(3.513673) });
        assert_eq!(
            encode(&m),
            b"<rpc-reply message-id=\"1\"><ok/><config-time-seconds>3.513673</config-time-seconds></rpc-reply>]]>]]>"
        );
    }

    #[test]
    fn error_reply_document() {
        let m = RpcMessage::new(4, Body::ErrorReply { tag: ErrorTag::InvalidValue, message: "192550 GHz <off-grid>".into() });
        let text = String::from_utf8(encode(&m)).unwrap();
        assert_eq!(
            text,
            "<rpc-reply message-id=\"4\"><rpc-error><error-tag>invalid-value</error-tag><error-message>192550 GHz &lt;off-grid&gt;</error-message></rpc-error></rpc-reply>]]>]]>"
        );
        assert_eq!(decode(text.as_bytes()).unwrap(), vec![m]);
    }

    #[test]
    fn hello_with_one_capability() {
        let m = RpcMessage::new(1, Body::Hello { capabilities: vec![BASE_CAPABILITY.into()] });
        let bytes = encode(&m);
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert_eq!(text.matches("<hello").count(), 1);
        assert_eq!(decode(&bytes).unwrap(), vec![m]);
    }

    #[test]
    fn two_documents_in_one_read() {
        let mut bytes = encode(&edit(1));
        bytes.extend(encode(&RpcMessage::new(1, Body::OkReply { config_time_s: None })));
        assert_eq!(decode(&bytes).unwrap().len(), 2);
    }

    #[test]
    fn partial_data_waits_for_delimiter() {
        let bytes = encode(&edit(7));
        let mut d = FrameDecoder::new();
        d.push(&bytes[..bytes.len() - 3]);
        assert!(d.next_message().is_none());
        d.push(&bytes[bytes.len() - 3..]);
        assert_eq!(d.next_message().unwrap().unwrap(), edit(7));
        assert_eq!(d.pending(), 0);
    }

    #[test]
    fn protocol_errors() {
        for doc in [
            r#"<rpc message-id="2"><unknown/></rpc>"#,
            r#"<rpc message-id="2"><edit-config></rpc>"#,
            r#"<rpc><get-telemetry/></rpc>"#,
            r#"<rpc message-id="0"><get-telemetry/></rpc>"#,
            r#"<bogus message-id="1"/>"#,
            r#"<rpc message-id="3"><get-telemetry/><get-telemetry/></rpc>"#,
            r#"<rpc-reply message-id="3"><ok/><config-time-seconds>fast</config-time-seconds></rpc-reply>"#,
            r#"<rpc-reply message-id="3"><rpc-error><error-tag>nope</error-tag></rpc-error></rpc-reply>"#,
            "not xml at all",
            "",
        ] {
            let framed = format!("{doc}]]>]]>");
            let err = decode(framed.as_bytes()).unwrap_err();
            assert_eq!(err.document, doc, "{doc}");
        }
    }

    #[test]
    fn telemetry_round_trip() {
        let rec = FeedbackRecord::new(
            TransceiverId::new("wb1", "Ethernet8").unwrap(),
            FrequencySlot::new(48).unwrap(),
            4.34,
            SimTime(123_456),
        )
        .unwrap();
        let m = RpcMessage::new(9, Body::TelemetryReply { records: vec![rec.clone(), rec] });
        assert_eq!(decode(&encode(&m)).unwrap(), vec![m]);
        let q = RpcMessage::new(10, Body::GetTelemetry { port: None });
        assert_eq!(decode(&encode(&q)).unwrap(), vec![q]);
    }
}
