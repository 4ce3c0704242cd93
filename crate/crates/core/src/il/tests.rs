use std::time::Duration;

use super::*;
use crate::control::{
    parse_order_book, Acknowledgement, ControlCommand, ControlDirective, ControlEndpoint, DataPoint,
    LatencyMode, ProductOrder, ReferenceControl,
};
use crate::event::{EventKind, SimEvent, Subjects};
use crate::fixtures::{MINICELL_MODEL, MINICELL_ORDERS};
use crate::kernel::{Injection, RejectPolicy};
use crate::model::{load_model, ShopModel};

fn model() -> ShopModel {
    load_model(MINICELL_MODEL).unwrap()
}

fn endpoint() -> ControlEndpoint {
    let model = model();
    let orders = parse_order_book(MINICELL_ORDERS).unwrap();
    let control = ReferenceControl::initialize(&model, &orders, LatencyMode::Off).unwrap();
    ControlEndpoint::new(control, model.hash())
}

fn config() -> SessionConfig {
    SessionConfig::new(Role::Emulation, model().hash(), "test")
}

fn event(time: u64, seq: u64, kind: EventKind, subjects: Subjects) -> SimEvent {
    SimEvent {
        time,
        seq,
        kind,
        subjects,
        detail: None,
    }
}

fn released() -> Vec<SimEvent> {
    ["O1", "O2", "O3"]
        .iter()
        .enumerate()
        .map(|(i, o)| event(0, i as u64, EventKind::OrderReleased, Subjects::default().order(*o).node("IN")))
        .collect()
}

/// Replies with canned lines, in order, one batch per received line.
struct Scripted(Vec<Vec<String>>);

impl LineHandler for Scripted {
    fn handle_line(&mut self, _line: &str) -> Vec<String> {
        if self.0.is_empty() {
            Vec::new()
        } else {
            self.0.remove(0)
        }
    }
}

fn control_line(round: u64, corr: &str, payload: Payload) -> String {
    encode(&Message::new(Role::Control, round, 0, Some(corr.into()), payload))
}

fn hello_ack() -> String {
    encode(&Message::new(
        Role::Control,
        0,
        0,
        None,
        Payload::HelloAck {
            model_hash: model().hash(),
            session: "test".into(),
        },
    ))
}

#[test]
fn handshake_succeeds_with_matching_version_and_model() {
    let session = open_session(config(), Box::new(Loopback::new(endpoint()))).unwrap();
    assert_eq!(session.round(), 0);
    assert_eq!(session.log().len(), 2);
}

#[test]
fn model_mismatch_reports_both_hashes() {
    let mut cfg = config();
    cfg.model_hash = "feed".into();
    let err = open_session(cfg, Box::new(Loopback::new(endpoint()))).err().unwrap();
    assert_eq!(
        err,
        IlError::ModelMismatch {
            ours: "feed".into(),
            theirs: model().hash()
        }
    );
    let text = err.to_string();
    assert!(text.contains("model mismatch") && text.contains("feed") && text.contains(&model().hash()));
}

#[test]
fn version_mismatch_is_refused() {
    let peer = endpoint().with_version("2");
    let err = open_session(config(), Box::new(Loopback::new(peer))).err().unwrap();
    assert!(matches!(err, IlError::VersionMismatch { .. } | IlError::Peer { .. }), "{err}");

    let mut cfg = config();
    cfg.version = "0".into();
    let err = open_session(cfg, Box::new(Loopback::new(endpoint()))).err().unwrap();
    assert!(err.to_string().contains("version"), "{err}");
}

#[test]
fn unknown_role_string_is_an_error() {
    assert_eq!(
        Role::parse_session_role("operator"),
        Err(IlError::UnknownRole("operator".into()))
    );
    assert_eq!(
        Role::parse_session_role("harness"),
        Err(IlError::UnknownRole("harness".into()))
    );
    assert_eq!(Role::parse_session_role("scenario-manager"), Ok(Role::ScenarioManager));
}

#[test]
fn arrival_at_m1_yields_start_op_and_end_of_round() {
    let mut session = open_session(config(), Box::new(Loopback::new(endpoint()))).unwrap();
    session.exchange_round(0, &released()).unwrap();
    let departed = |s: &str, o: &str, seq| event(0, seq, EventKind::ShuttleDeparted, Subjects::default().shuttle(s).order(o).node("IN"));
    session.exchange_round(0, &[departed("S1", "O1", 3), departed("S2", "O2", 4)]).unwrap();
    let arrived = event(
        5,
        5,
        EventKind::ShuttleArrived,
        Subjects::default().shuttle("S1").order("O1").node("M1").machine("M1"),
    );
    let reply = session.exchange_round(5, &[arrived]).unwrap();
    assert_eq!(
        reply.commands,
        vec![ControlCommand::StartOp {
            machine: "M1".into(),
            order: "O1".into(),
            operation: "A".into(),
            holon: "resource:M1".into(),
        }]
    );
    let last = session.log().lines().last().unwrap();
    assert!(last.contains("\"kind\":\"end-of-round\""));
}

#[test]
fn empty_batch_is_a_legal_idle_round() {
    let mut session = open_session(config(), Box::new(Loopback::new(endpoint()))).unwrap();
    let reply = session.exchange_round(0, &[]).unwrap();
    assert!(reply.commands.is_empty());
    assert_eq!(session.round(), 1);
}

#[test]
fn commands_without_end_of_round_are_a_protocol_violation() {
    let command = Payload::Command(ControlCommand::MoveShuttle {
        shuttle: "S1".into(),
        to: "M1".into(),
        load: None,
        holon: "x".into(),
    });
    let peer = Scripted(vec![vec![hello_ack()], vec![control_line(1, "n1", command)]]);
    let mut session = open_session(config(), Box::new(Loopback::new(peer))).unwrap();
    let err = session.exchange_round(0, &[]).unwrap_err();
    assert!(matches!(err, IlError::ProtocolViolation(_)), "{err}");
    assert!(err.to_string().contains("protocol violation"));
}

#[test]
fn silent_control_times_out() {
    let peer = Scripted(vec![vec![hello_ack()]]);
    let mut session = open_session(config(), Box::new(Loopback::new(peer))).unwrap();
    assert!(matches!(session.exchange_round(0, &[]), Err(IlError::Timeout(_))));
}

#[test]
fn garbled_command_aborts_the_round_with_a_diagnostic() {
    let peer = Scripted(vec![vec![hello_ack()], vec!["IL1 {\"v\":\"1\",\n".into()]]);
    let mut session = open_session(config(), Box::new(Loopback::new(peer))).unwrap();
    let err = session.exchange_round(0, &[]).unwrap_err();
    assert!(matches!(err, IlError::MalformedCommand(_)), "{err}");
}

#[test]
fn command_for_another_round_is_rejected() {
    let stale = control_line(7, "n7", Payload::EndOfRound {});
    let peer = Scripted(vec![vec![hello_ack()], vec![stale]]);
    let mut session = open_session(config(), Box::new(Loopback::new(peer))).unwrap();
    assert!(matches!(session.exchange_round(0, &[]), Err(IlError::ProtocolViolation(_))));
}

#[test]
fn directives_are_acknowledged_with_matching_correlation() {
    let mut session = open_session(config(), Box::new(Loopback::new(endpoint()))).unwrap();
    let ack = session
        .send_directive(0, &ControlDirective::CancelOrder { order: "O99".into() })
        .unwrap();
    assert!(!ack.ok);
    let ack = session
        .send_directive(0, &ControlDirective::AnnounceBreakdown { machine: "M2".into() })
        .unwrap();
    assert_eq!(ack, Acknowledgement::ok());
    let lines = session.log().lines();
    assert!(lines[lines.len() - 1].contains("\"corr\":\"d1.1\""));
}

#[test]
fn encoding_is_canonical() {
    let a = Message::new(Role::Emulation, 3, 40, Some("n3".into()), Payload::Notify { events: released() });
    let b = a.clone();
    assert_eq!(encode(&a), encode(&b));
    let line = encode(&a);
    assert!(line.starts_with("IL1 {\"body\":"));
    assert!(line.ends_with("\"v\":\"1\"}\n"));
    // Keys are sorted whatever order the input had.
    let shuffled = line.replacen("{\"body\"", "{\"v\":\"1\",\"body\"", 1).replace(",\"v\":\"1\"}", "}");
    assert_eq!(encode(&decode(shuffled.as_bytes()).unwrap()), line);
}

#[test]
fn unknown_payload_kind_is_named() {
    let line = "IL1 {\"body\":{},\"corr\":null,\"kind\":\"teleport\",\"role\":\"control\",\"round\":1,\"t\":0,\"v\":\"1\"}\n";
    let err = decode(line.as_bytes()).unwrap_err();
    assert!(matches!(err, DecodeError::UnknownKind { ref kind, .. } if kind == "teleport"));
    assert!(err.to_string().contains("teleport"));
    assert_eq!(&line[err.offset()..err.offset() + 10], "\"teleport\"");
}

#[test]
fn truncated_and_garbled_bytes_report_an_offset() {
    let line = encode(&Message::new(Role::Emulation, 1, 0, None, Payload::Notify { events: released() }));
    let cut = &line.as_bytes()[..40];
    let err = decode(cut).unwrap_err();
    assert!(matches!(err, DecodeError::Syntax { .. }));
    assert!(err.offset() <= 40 && err.offset() >= WIRE_PREFIX.len(), "{err}");

    let err = decode(b"IL2 {}").unwrap_err();
    assert_eq!(err.offset(), 2);
    let err = decode(b"IL1 {\"v\":\"1\"}").unwrap_err();
    assert!(err.to_string().contains("missing key"));
    let err = decode(&[b'I', b'L', b'1', b' ', 0xff]).unwrap_err();
    assert_eq!(err.offset(), 4);
}

#[test]
fn stream_tags_split_directives_and_taps() {
    assert!(StreamTag::Flow1.is_kpi_tap() && StreamTag::Flow2.is_kpi_tap() && StreamTag::Flow7.is_kpi_tap());
    for tag in [StreamTag::Flow3, StreamTag::Flow4, StreamTag::Flow5, StreamTag::Flow6] {
        assert!(!tag.is_kpi_tap());
    }
    let order = ProductOrder::new("O4", &["A"], 0, 1, 0);
    assert_eq!(StreamTag::for_directive(&ControlDirective::InsertOrder { order }), StreamTag::Flow3);
    assert_eq!(
        StreamTag::for_directive(&ControlDirective::AnnounceSupplyBlock { machine: "M1".into() }),
        StreamTag::Flow6
    );
    assert_eq!(serde_json::to_string(&StreamTag::Flow7).unwrap(), "\"FLOW7\"");
}

fn recorded_session() -> String {
    let mut session = open_session(config(), Box::new(Loopback::new(endpoint()))).unwrap();
    session.exchange_round(0, &released()).unwrap();
    session
        .send_directive(0, &ControlDirective::AnnounceBreakdown { machine: "M2".into() })
        .unwrap();
    session.exchange_round(0, &[]).unwrap();
    session.request_kpi(0).unwrap();
    session.close(0).unwrap().text()
}

#[test]
fn replay_reproduces_the_command_log() {
    let log = recorded_session();
    let backend = replay_backend(&log).unwrap();
    assert_eq!(backend.rounds(), 2);
    let replayed = backend.run(config(), Box::new(Loopback::new(endpoint()))).unwrap();
    assert_eq!(command_log(&replayed.text()), command_log(&log));
    assert!(!command_log(&log).is_empty());
    assert_eq!(replayed.text(), log);
}

#[test]
fn empty_log_replays_as_an_immediately_closed_session() {
    let backend = replay_backend("").unwrap();
    assert!(backend.is_empty());
    let peer = Scripted(Vec::new());
    assert!(backend.run(config(), Box::new(Loopback::new(peer))).unwrap().is_empty());
}

#[test]
fn reordered_rounds_violate_monotonicity() {
    let log = recorded_session();
    let mut lines: Vec<&str> = log.split_inclusive('\n').collect();
    let first = lines.iter().position(|l| l.contains("\"round\":1")).unwrap();
    let second = lines.iter().position(|l| l.contains("\"round\":2")).unwrap();
    lines.swap(first, second);
    let err = replay_backend(&lines.concat()).unwrap_err();
    assert!(err.to_string().contains("round 1 after round 2"), "{err}");
}

#[test]
fn truncation_mid_round_is_detected() {
    let log = recorded_session();
    let lines: Vec<&str> = log.split_inclusive('\n').collect();
    let notify = lines.iter().rposition(|l| l.contains("\"kind\":\"notify\"")).unwrap();
    let err = replay_backend(&lines[..=notify].concat()).unwrap_err();
    assert!(err.to_string().contains("truncated mid-round"), "{err}");

    let err = replay_backend(&log[..log.len() - 3]).unwrap_err();
    assert!(err.to_string().contains("truncated"), "{err}");
}

#[cfg(unix)]
#[test]
fn control_in_another_thread_over_a_socket_behaves_identically() {
    use std::os::unix::net::UnixStream;

    let (ours, theirs) = UnixStream::pair().unwrap();
    let server = std::thread::spawn(move || {
        let mut handler = endpoint();
        let mut transport = StreamTransport::new(theirs.try_clone().unwrap(), theirs);
        serve(&mut handler, &mut transport).unwrap();
    });
    let mut cfg = config();
    cfg.timeout = Some(Duration::from_secs(5));
    let transport = StreamTransport::new(ours.try_clone().unwrap(), ours);
    let mut session = open_session(cfg, Box::new(transport)).unwrap();
    session.exchange_round(0, &released()).unwrap();
    session
        .send_directive(0, &ControlDirective::AnnounceBreakdown { machine: "M2".into() })
        .unwrap();
    session.exchange_round(0, &[]).unwrap();
    session.request_kpi(0).unwrap();
    let socket_log = session.close(0).unwrap().text();
    server.join().unwrap();
    assert_eq!(socket_log, recorded_session());
}

mod codec_properties {
    use super::*;
    use proptest::prelude::*;

    fn id() -> impl Strategy<Value = String> {
        "[A-Z][0-9]{1,2}"
    }

    fn sim_event() -> impl Strategy<Value = SimEvent> {
        (
            0u64..10_000,
            0u64..10_000,
            proptest::sample::select(EventKind::ALL.to_vec()),
            proptest::option::of(id()),
            proptest::option::of(id()),
            proptest::option::of(id()),
            proptest::option::of("[ -~]{0,12}"),
        )
            .prop_map(|(time, seq, kind, machine, order, shuttle, detail)| SimEvent {
                time,
                seq,
                kind,
                subjects: Subjects {
                    machine,
                    shuttle,
                    order,
                    node: None,
                },
                detail,
            })
    }

    fn payload() -> impl Strategy<Value = Payload> {
        prop_oneof![
            proptest::collection::vec(sim_event(), 0..5).prop_map(|events| Payload::Notify { events }),
            (id(), id(), proptest::option::of(id())).prop_map(|(shuttle, to, load)| Payload::Command(
                ControlCommand::MoveShuttle { shuttle, to, load, holon: "h".into() }
            )),
            Just(Payload::EndOfRound {}),
            (id(), -5i64..20).prop_map(|(order, priority)| Payload::Directive {
                flow: StreamTag::Flow5,
                directive: ControlDirective::SetPriority { order, priority },
            }),
            (any::<bool>(), proptest::option::of("[a-z ]{0,10}"))
                .prop_map(|(ok, error)| Payload::Ack(Acknowledgement { ok, error })),
            proptest::collection::vec(("[a-z_]{1,8}", any::<i64>()), 0..4).prop_map(|points| Payload::Data {
                points: points.into_iter().map(|(n, v)| DataPoint { name: n, value: v }).collect()
            }),
            (id(), proptest::option::of(1u64..100)).prop_map(|(target, duration)| Payload::Inject {
                rule: 0,
                injection: Injection::MachineDown { target, duration },
            }),
            id().prop_map(|target| Payload::Inject {
                rule: 1,
                injection: Injection::ProductReject { target, policy: RejectPolicy::Scrap },
            }),
            sim_event().prop_map(|e| Payload::Tap { tag: StreamTag::Flow1, seq: e.seq, record: TapRecord::Event(e) }),
            Just(Payload::KpiRequest {}),
            Just(Payload::Close {}),
        ]
    }

    fn message() -> impl Strategy<Value = Message> {
        (
            proptest::sample::select(vec![Role::Control, Role::Emulation, Role::ScenarioManager, Role::Kpi, Role::Harness]),
            0u64..1_000,
            0u64..1_000_000,
            proptest::option::of("[a-z0-9.]{1,6}"),
            payload(),
        )
            .prop_map(|(role, round, t, corr, payload)| Message::new(role, round, t, corr, payload))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn decode_inverts_encode(msg in message()) {
            let line = encode(&msg);
            prop_assert_eq!(line.matches('\n').count(), 1);
            let back = decode(line.as_bytes()).unwrap();
            prop_assert_eq!(&back, &msg);
            prop_assert_eq!(encode(&back), line);
        }

        #[test]
        fn any_prefix_of_a_line_fails_cleanly(msg in message(), cut in 0usize..400) {
            let line = encode(&msg);
            let body = line.trim_end_matches('\n');
            let cut = cut.min(body.len().saturating_sub(1));
            let err = decode(&body.as_bytes()[..cut]).unwrap_err();
            prop_assert!(err.offset() <= cut);
        }
    }
}
