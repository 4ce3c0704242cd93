use super::*;
use crate::fixtures;
use crate::model::load_model;

fn minicell() -> Kernel {
    Kernel::new(load_model(fixtures::MINICELL_MODEL).unwrap())
}

fn mv(shuttle: &str, to: &str, load: Option<&str>) -> ControlCommand {
    ControlCommand::MoveShuttle {
        shuttle: shuttle.into(),
        to: to.into(),
        load: load.map(str::to_string),
        holon: "test".into(),
    }
}

fn start(machine: &str, order: &str, op: &str) -> ControlCommand {
    ControlCommand::StartOp {
        machine: machine.into(),
        order: order.into(),
        operation: op.into(),
        holon: "test".into(),
    }
}

fn kinds(batch: &[SimEvent]) -> Vec<(Tick, EventKind)> {
    batch.iter().map(|e| (e.time, e.kind)).collect()
}

/// Releases O1 at t=0 and drives S1 with O1 aboard to M1 (arrives t=5).
fn o1_parked_at_m1() -> Kernel {
    let mut k = minicell();
    k.schedule_release("O1", 0).unwrap();
    assert_eq!(kinds(&k.advance(&[]).unwrap()), vec![(0, EventKind::OrderReleased)]);
    assert_eq!(
        kinds(&k.advance(&[mv("S1", "M1", Some("O1"))]).unwrap()),
        vec![(0, EventKind::ShuttleDeparted)]
    );
    assert_eq!(kinds(&k.advance(&[]).unwrap()), vec![(5, EventKind::ShuttleArrived)]);
    k
}

#[test]
fn move_departs_now_and_arrives_after_travel() {
    let mut k = minicell();
    let batch = k.advance(&[mv("S1", "M1", None)]).unwrap();
    assert_eq!(batch.len(), 1);
    assert_eq!(batch[0].kind, EventKind::ShuttleDeparted);
    assert_eq!((batch[0].time, batch[0].shuttle(), batch[0].node()), (0, Some("S1"), Some("IN")));
    let batch = k.advance(&[]).unwrap();
    assert_eq!(batch.len(), 1);
    assert_eq!(batch[0].kind, EventKind::ShuttleArrived);
    assert_eq!((batch[0].time, batch[0].node(), batch[0].machine()), (5, Some("M1"), Some("M1")));
}

#[test]
fn idle_kernel_is_a_fixed_point() {
    let mut k = minicell();
    let before = k.snapshot();
    assert!(k.advance(&[]).unwrap().is_empty());
    assert_eq!(k.clock(), 0);
    assert_eq!(k.snapshot(), before);
}

#[test]
fn operation_finishes_after_processing_time() {
    let mut k = o1_parked_at_m1();
    let batch = k.advance(&[start("M1", "O1", "A")]).unwrap();
    assert_eq!(kinds(&batch), vec![(5, EventKind::OpStarted)]);
    let batch = k.advance(&[]).unwrap();
    assert_eq!(kinds(&batch), vec![(15, EventKind::OpFinished)]);
    assert_eq!(batch[0].machine(), Some("M1"));
    assert_eq!(batch[0].order(), Some("O1"));
}

#[test]
fn arriving_at_output_completes_the_order() {
    let mut k = o1_parked_at_m1();
    k.advance(&[mv("S1", "OUT", None)]).unwrap();
    let batch = k.advance(&[]).unwrap();
    assert_eq!(
        kinds(&batch),
        vec![(10, EventKind::ShuttleArrived), (10, EventKind::OrderCompleted)]
    );
    assert_eq!(k.order_location("O1"), Some(&OrderLocation::Completed));
    assert_eq!(k.shuttle("S1").unwrap().cargo, None);
    assert!(k.live_orders().is_empty());
}

#[test]
fn machine_down_blocks_new_operations() {
    let mut k = minicell();
    k.schedule_release("O1", 0).unwrap();
    k.advance(&[]).unwrap();
    k.advance(&[mv("S1", "M2", Some("O1"))]).unwrap();
    k.advance(&[]).unwrap(); // arrives t=5
    let events = k
        .apply_injection(&Injection::MachineDown {
            target: "M2".into(),
            duration: None,
        })
        .unwrap();
    assert_eq!(kinds(&events), vec![(5, EventKind::MachineDown)]);
    let batch = k.advance(&[start("M2", "O1", "B")]).unwrap();
    assert_eq!(kinds(&batch), vec![(5, EventKind::CommandRejected)]);
    assert!(batch[0].detail.as_deref().unwrap().contains("down"));
    assert_eq!(k.machine_status("M2"), Some(MachineStatus::Down { until: None }));
}

#[test]
fn machine_down_with_duration_schedules_repair() {
    let mut k = minicell();
    // Idle M2 at t=20.
    k.advance_until(&[], Some(20)).unwrap();
    assert_eq!(k.clock(), 20);
    let events = k
        .apply_injection(&Injection::MachineDown {
            target: "M2".into(),
            duration: Some(50),
        })
        .unwrap();
    assert_eq!(kinds(&events), vec![(20, EventKind::MachineDown)]);
    let batch = k.advance(&[]).unwrap();
    assert_eq!(kinds(&batch), vec![(70, EventKind::MachineUp)]);
    assert_eq!(k.machine_status("M2"), Some(MachineStatus::Idle));
}

#[test]
fn repeated_down_is_a_warning_only() {
    let mut k = minicell();
    let down = Injection::MachineDown {
        target: "M1".into(),
        duration: None,
    };
    assert_eq!(k.apply_injection(&down).unwrap().len(), 1);
    assert!(k.apply_injection(&down).unwrap().is_empty());
    assert_eq!(k.warnings().len(), 1);
}

#[test]
fn breakdown_preempts_and_work_restarts_from_zero() {
    let mut k = o1_parked_at_m1();
    k.advance(&[start("M1", "O1", "A")]).unwrap(); // 5..15
    k.advance_until(&[], Some(8)).unwrap();
    let events = k
        .apply_injection(&Injection::MachineDown {
            target: "M1".into(),
            duration: Some(2),
        })
        .unwrap();
    assert_eq!(events[0].order(), Some("O1"));
    assert_eq!(events[0].detail.as_deref(), Some("preempted A"));
    // The stale finish at 15 must not fire; repair comes at 10.
    assert_eq!(kinds(&k.advance(&[]).unwrap()), vec![(10, EventKind::MachineUp)]);
    assert_eq!(kinds(&k.advance(&[start("M1", "O1", "A")]).unwrap()), vec![(10, EventKind::OpStarted)]);
    assert_eq!(kinds(&k.advance(&[]).unwrap()), vec![(20, EventKind::OpFinished)]);
    assert!(k.is_idle());
}

#[test]
fn rework_keeps_the_order_and_scrap_removes_it() {
    let mut k = o1_parked_at_m1();
    let events = k
        .apply_injection(&Injection::ProductReject {
            target: "O1".into(),
            policy: RejectPolicy::Rework,
        })
        .unwrap();
    assert_eq!(events[0].kind, EventKind::ProductRejected);
    assert_eq!(events[0].detail.as_deref(), Some("rework"));
    assert_eq!(events[0].shuttle(), Some("S1"));
    assert_eq!(
        k.order_location("O1"),
        Some(&OrderLocation::OnShuttle { shuttle: "S1".into() })
    );

    k.advance(&[start("M1", "O1", "A")]).unwrap();
    let events = k
        .apply_injection(&Injection::ProductReject {
            target: "O1".into(),
            policy: RejectPolicy::Scrap,
        })
        .unwrap();
    assert_eq!(events[0].machine(), Some("M1"));
    assert_eq!(k.order_location("O1"), Some(&OrderLocation::Scrapped));
    assert_eq!(k.shuttle("S1").unwrap().cargo, None);
    assert_eq!(k.machine_status("M1"), Some(MachineStatus::Idle));
    // The aborted operation never finishes.
    assert!(k.advance(&[]).unwrap().is_empty());
}

#[test]
fn supply_shortage_lets_current_work_finish() {
    let mut k = o1_parked_at_m1();
    k.advance(&[start("M1", "O1", "A")]).unwrap();
    let events = k
        .apply_injection(&Injection::SupplyShortage {
            target: "M1".into(),
            duration: Some(20),
        })
        .unwrap();
    assert_eq!(kinds(&events), vec![(5, EventKind::SupplyBlocked)]);
    assert_eq!(kinds(&k.advance(&[]).unwrap()), vec![(15, EventKind::OpFinished)]);
    let batch = k.advance(&[start("M1", "O1", "A")]).unwrap();
    assert_eq!(kinds(&batch), vec![(15, EventKind::CommandRejected)]);
    assert_eq!(kinds(&k.advance(&[]).unwrap()), vec![(25, EventKind::SupplyRestored)]);
}

#[test]
fn unknown_targets_are_errors() {
    let mut k = minicell();
    assert!(matches!(
        k.advance(&[mv("S9", "M1", None)]),
        Err(KernelError::UnknownEntity { what: "shuttle", .. })
    ));
    assert!(matches!(
        k.advance(&[mv("S1", "NOWHERE", None)]),
        Err(KernelError::UnknownEntity { what: "node", .. })
    ));
    assert!(k
        .apply_injection(&Injection::MachineDown { target: "M7".into(), duration: None })
        .is_err());
    assert!(matches!(
        k.apply_injection(&Injection::MachineDown { target: "M1".into(), duration: Some(0) }),
        Err(KernelError::InvalidInjection(_))
    ));
}

#[test]
fn unroutable_destination_is_an_error() {
    let doc = r#"{
        "machines": [{"id": "M1", "operations": {"A": 1}}],
        "transport": {"nodes": ["IN", "M1", "OUT", "ISLAND"],
                      "edges": [{"from": "IN", "to": "M1", "travel": 1},
                                {"from": "M1", "to": "OUT", "travel": 1},
                                {"from": "OUT", "to": "IN", "travel": 1}]},
        "shuttles": {"count": 1, "home": "IN"},
        "stations": {"input": "IN", "output": "OUT"}
    }"#;
    let mut k = Kernel::new(load_model(doc).unwrap());
    assert_eq!(
        k.advance(&[mv("S1", "ISLAND", None)]),
        Err(KernelError::Unroutable { from: "IN".into(), to: "ISLAND".into() })
    );
}

#[test]
fn same_tick_events_follow_kind_then_subject_order() {
    let mut k = minicell();
    k.schedule_release("O2", 0).unwrap();
    k.schedule_release("O1", 0).unwrap();
    let batch = k.advance(&[]).unwrap();
    let orders: Vec<_> = batch.iter().map(|e| e.order().unwrap()).collect();
    assert_eq!(orders, vec!["O1", "O2"]);
    let batch = k
        .advance(&[mv("S2", "M1", Some("O2")), mv("S1", "M2", Some("O1"))])
        .unwrap();
    let shuttles: Vec<_> = batch.iter().map(|e| e.shuttle().unwrap()).collect();
    assert_eq!(shuttles, vec!["S1", "S2"]);
    assert_eq!(batch.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![2, 3]);
}

#[test]
fn cancel_is_refused_while_processing() {
    let mut k = o1_parked_at_m1();
    let cancel = ControlCommand::CancelOrder { order: "O1".into(), holon: "t".into() };
    k.advance(&[start("M1", "O1", "A")]).unwrap();
    let batch = k.advance(std::slice::from_ref(&cancel)).unwrap();
    assert_eq!(kinds(&batch), vec![(5, EventKind::CommandRejected)]);
    k.advance(&[]).unwrap(); // finishes at 15
    let batch = k.advance(&[cancel]).unwrap();
    assert_eq!(kinds(&batch), vec![(15, EventKind::OrderCancelled)]);
    assert_eq!(k.shuttle("S1").unwrap().cargo, None);
}

#[test]
fn snapshot_round_trips() {
    let k = minicell();
    let doc = k.snapshot();
    assert_eq!(Kernel::restore(&doc).unwrap(), k);
    assert_eq!(k.snapshot(), doc);
}

#[test]
fn snapshot_resume_matches_original() {
    let mut k = minicell();
    k.schedule_release("O1", 0).unwrap();
    k.advance(&[]).unwrap();
    k.advance(&[mv("S1", "M1", Some("O1"))]).unwrap();
    k.advance(&[]).unwrap();
    let mut resumed = Kernel::restore(&k.snapshot()).unwrap();
    assert_eq!(resumed, k);
    let cmds = [start("M1", "O1", "A")];
    assert_eq!(resumed.advance(&cmds).unwrap(), k.advance(&cmds).unwrap());
    assert_eq!(resumed.advance(&[]).unwrap(), k.advance(&[]).unwrap());
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    #[derive(Debug, Clone)]
    enum Step {
        Cmd(ControlCommand),
        Inject(Injection),
        Wait,
    }

    fn step() -> impl Strategy<Value = Step> {
        let shuttle = prop_oneof![Just("S1"), Just("S2")];
        let node = prop_oneof![Just("IN"), Just("M1"), Just("M2"), Just("OUT")];
        let order = prop_oneof![Just("O1"), Just("O2"), Just("O3")];
        let machine = prop_oneof![Just("M1"), Just("M2")];
        let op = prop_oneof![Just("A"), Just("B")];
        prop_oneof![
            (shuttle, node, proptest::option::of(order.clone())).prop_map(|(s, n, o)| Step::Cmd(mv(s, n, o))),
            (machine.clone(), order.clone(), op).prop_map(|(m, o, op)| Step::Cmd(start(m, o, op))),
            order.clone().prop_map(|o| Step::Cmd(ControlCommand::CancelOrder { order: o.into(), holon: "p".into() })),
            (machine.clone(), proptest::option::of(1u64..30)).prop_map(|(m, d)| Step::Inject(Injection::MachineDown { target: m.into(), duration: d })),
            machine.clone().prop_map(|m| Step::Inject(Injection::MachineUp { target: m.into() })),
            (machine.clone(), proptest::option::of(1u64..30)).prop_map(|(m, d)| Step::Inject(Injection::SupplyShortage { target: m.into(), duration: d })),
            machine.prop_map(|m| Step::Inject(Injection::SupplyRestore { target: m.into() })),
            (order, prop_oneof![Just(RejectPolicy::Rework), Just(RejectPolicy::Scrap)])
                .prop_map(|(o, p)| Step::Inject(Injection::ProductReject { target: o.into(), policy: p })),
            Just(Step::Wait),
            Just(Step::Wait),
        ]
    }

    fn run(steps: &[Step]) -> Vec<SimEvent> {
        let mut k = minicell();
        for (i, o) in ["O1", "O2", "O3"].iter().enumerate() {
            k.schedule_release(o, i as Tick * 3).unwrap();
        }
        let mut log = Vec::new();
        for s in steps {
            match s {
                Step::Cmd(c) => log.extend(k.advance(std::slice::from_ref(c)).unwrap()),
                Step::Inject(inj) => log.extend(k.apply_injection(inj).unwrap()),
                Step::Wait => log.extend(k.advance(&[]).unwrap()),
            }
        }
        // Drain.
        loop {
            let batch = k.advance(&[]).unwrap();
            if batch.is_empty() {
                break;
            }
            log.extend(batch);
        }
        log
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn event_stream_is_deterministic_and_legal(steps in proptest::collection::vec(step(), 0..60)) {
            let a = run(&steps);
            let b = run(&steps);
            prop_assert_eq!(
                crate::canonical::to_canonical_string(&a),
                crate::canonical::to_canonical_string(&b)
            );

            // Total order without seq gaps.
            for (i, e) in a.iter().enumerate() {
                prop_assert_eq!(e.seq, i as u64);
            }
            for w in a.windows(2) {
                prop_assert!((w[0].time, w[0].seq) < (w[1].time, w[1].seq));
            }

            // Status legality, and down/up alternation per machine.
            let mut down = std::collections::BTreeMap::new();
            let mut blocked = std::collections::BTreeMap::new();
            for e in &a {
                let m = e.machine().unwrap_or_default().to_string();
                match e.kind {
                    EventKind::MachineDown => prop_assert!(!down.insert(m, true).unwrap_or(false)),
                    EventKind::MachineUp => prop_assert!(down.insert(m, false).unwrap_or(false)),
                    EventKind::SupplyBlocked => prop_assert!(!blocked.insert(m, true).unwrap_or(false)),
                    EventKind::SupplyRestored => prop_assert!(blocked.insert(m, false).unwrap_or(false)),
                    EventKind::OpStarted => {
                        prop_assert!(!down.get(&m).copied().unwrap_or(false));
                        prop_assert!(!blocked.get(&m).copied().unwrap_or(false));
                    }
                    _ => {}
                }
            }
        }
    }
}
