use crate::control::ControlDirective;
use crate::il::{decode, Payload, Role, StreamTag, TapRecord};
use crate::model::ShopModel;

use super::{KpiEngine, KpiError, KpiReport, OrderMeta, TaggedRecord};

/// Rebuilds a run's report from its session log alone: the run header,
/// the notification batches, directives, control data and the control's
/// KPI export. Tap records in the log are ignored, so this is an
/// independent path to the same numbers.
pub fn recompute_from_log(model: &ShopModel, log: &str) -> Result<KpiReport, KpiError> {
    let mut engine: Option<KpiEngine> = None;
    let mut status: Option<String> = None;
    for (index, line) in log.split_inclusive('\n').enumerate() {
        if !line.ends_with('\n') {
            return Err(KpiError::IncompleteLog(format!("line {} is cut short", index + 1)));
        }
        let msg = decode(line.as_bytes())
            .map_err(|e| KpiError::Parse(format!("line {}: {e}", index + 1)))?;
        if let Payload::RunOpen { header } = &msg.payload {
            engine = Some(KpiEngine::new(model, header.clone()));
            continue;
        }
        if matches!(msg.payload, Payload::Hello { .. } | Payload::HelloAck { .. }) {
            continue;
        }
        let Some(engine) = engine.as_mut() else {
            return Err(KpiError::IncompleteLog("no run header before the first record".into()));
        };
        match msg.payload {
            Payload::Notify { events } => {
                for e in &events {
                    engine.ingest(TaggedRecord::event(e))?;
                }
            }
            Payload::Directive {
                directive: ControlDirective::InsertOrder { order },
                ..
            } => engine.register_order(&OrderMeta::from(&order)),
            Payload::Data { points } if msg.role == Role::Control => engine.ingest(TaggedRecord {
                tag: StreamTag::Flow2,
                t: msg.t,
                seq: msg.round,
                record: TapRecord::Points(points),
            })?,
            Payload::Kpi { metrics } if msg.role == Role::Control => engine.ingest(TaggedRecord {
                tag: StreamTag::Flow7,
                t: msg.t,
                seq: 0,
                record: TapRecord::Points(metrics),
            })?,
            Payload::RunClose { status: s, .. } => status = Some(s),
            _ => {}
        }
    }
    let mut engine = engine.ok_or_else(|| KpiError::IncompleteLog("no run header".into()))?;
    let status = status.ok_or_else(|| KpiError::IncompleteLog("no run-close record".into()))?;
    if status == "completed" {
        let unfinished = engine.unfinished();
        if !unfinished.is_empty() {
            return Err(KpiError::Conservation(format!(
                "released orders never finished: {}",
                unfinished.join(", ")
            )));
        }
    } else {
        engine.invalidate(status.clone());
    }
    engine.close(&status);
    engine.finalize()
}
