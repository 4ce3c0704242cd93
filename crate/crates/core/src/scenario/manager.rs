use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use crate::control::ControlDirective;
use crate::event::{EventKind, SimEvent, Tick};
use crate::kernel::Injection;

use super::{stream_rng, Action, Param, Scenario, ScenarioError, Trigger};

/// An action ready to be applied, with every sampled parameter bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundAction {
    Inject(Injection),
    Direct(ControlDirective),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Firing {
    pub rule: usize,
    /// Sim-time the action takes effect.
    pub time: Tick,
    pub action: BoundAction,
}

/// Occurrence counter key: event kind plus the canonical filter.
type CounterKey = (EventKind, String);

#[derive(Debug, Clone)]
enum Leaf {
    At(Tick),
    On {
        key: CounterKey,
        filter: BTreeMap<String, String>,
        occurrence: u64,
    },
}

#[derive(Debug, Clone)]
struct Armed {
    leaf: Leaf,
    delay: Tick,
    max: u64,
    fired: u64,
}

/// Plays one scenario against one run. Deterministic given the event
/// stream and the run seed.
#[derive(Debug, Clone)]
pub struct ScenarioManager {
    scenario: Scenario,
    rules: Vec<Armed>,
    counters: BTreeMap<CounterKey, u64>,
    /// (due, rule) for delayed firings, kept sorted.
    timers: Vec<(Tick, usize)>,
    streams: BTreeMap<String, ChaCha8Rng>,
}

impl ScenarioManager {
    pub fn new(scenario: Scenario, run_seed: u64) -> Self {
        let rules = scenario
            .rules
            .iter()
            .map(|rule| {
                let (leaf, delay) = rule.trigger.flatten();
                let leaf = match leaf {
                    Trigger::AtTime(t) => Leaf::At(*t),
                    Trigger::OnEvent(t) => {
                        let kind = t.kind.parse::<EventKind>().expect("validated on load");
                        let filter_key = crate::canonical::to_canonical_string(&t.filter);
                        Leaf::On {
                            key: (kind, filter_key),
                            filter: t.filter.clone(),
                            occurrence: t.occurrence,
                        }
                    }
                    Trigger::After { .. } => unreachable!("flatten returns a leaf"),
                };
                Armed {
                    leaf,
                    delay,
                    max: rule.max_occurrences,
                    fired: 0,
                }
            })
            .collect();
        let streams = scenario
            .distributions
            .iter()
            .map(|d| (d.name.clone(), stream_rng(run_seed, &scenario.id, d.stream_label())))
            .collect();
        ScenarioManager {
            scenario,
            rules,
            counters: BTreeMap::new(),
            timers: Vec::new(),
            streams,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Draws the next value of a declared distribution.
    pub fn sample(&mut self, name: &str) -> Result<u64, ScenarioError> {
        let spec = self
            .scenario
            .distribution(name)
            .ok_or_else(|| ScenarioError::UndeclaredDistribution(name.to_string()))?;
        let rng = self.streams.get_mut(name).expect("one stream per distribution");
        Ok(spec.distribution.sample(rng))
    }

    /// Earliest sim-time at which [`ScenarioManager::on_time`] has work.
    pub fn next_wakeup(&self) -> Option<Tick> {
        let timers = self.timers.first().map(|&(due, _)| due);
        let at = self.rules.iter().filter_map(|r| match r.leaf {
            Leaf::At(t) if r.fired == 0 => Some(t + r.delay),
            _ => None,
        });
        timers.into_iter().chain(at).min()
    }

    /// Fires everything due at or before `now`.
    pub fn on_time(&mut self, now: Tick) -> Vec<Firing> {
        for index in 0..self.rules.len() {
            let rule = &mut self.rules[index];
            if let Leaf::At(t) = rule.leaf {
                if rule.fired == 0 && t + rule.delay <= now {
                    rule.fired = 1;
                    self.timers.push((t + rule.delay, index));
                }
            }
        }
        self.timers.sort();
        let split = self.timers.partition_point(|&(due, _)| due <= now);
        let due: Vec<(Tick, usize)> = self.timers.drain(..split).collect();
        due.into_iter()
            .flat_map(|(_, rule)| self.fire(rule, now))
            .collect()
    }

    /// Counts `event` against every on-event trigger and returns the
    /// firings it causes at its own sim-time.
    pub fn on_event(&mut self, event: &SimEvent) -> Vec<Firing> {
        let mut bumped: Vec<CounterKey> = Vec::new();
        for rule in &self.rules {
            if let Leaf::On { key, filter, .. } = &rule.leaf {
                if key.0 == event.kind
                    && !bumped.contains(key)
                    && filter.iter().all(|(f, v)| event.subjects.get(f) == Some(v.as_str()))
                {
                    bumped.push(key.clone());
                }
            }
        }
        for key in &bumped {
            *self.counters.entry(key.clone()).or_default() += 1;
        }
        let mut firings = Vec::new();
        for index in 0..self.rules.len() {
            let rule = &self.rules[index];
            let Leaf::On { key, occurrence, .. } = &rule.leaf else {
                continue;
            };
            if !bumped.contains(key) || rule.fired >= rule.max {
                continue;
            }
            if self.counters[key] < *occurrence {
                continue;
            }
            let delay = rule.delay;
            self.rules[index].fired += 1;
            if delay == 0 {
                firings.extend(self.fire(index, event.time));
            } else {
                let due = event.time + delay;
                let at = self.timers.partition_point(|&(d, r)| (d, r) <= (due, index));
                self.timers.insert(at, (due, index));
            }
        }
        firings
    }

    fn fire(&mut self, rule: usize, time: Tick) -> Vec<Firing> {
        log::debug!("scenario {}: rule {rule} fires at t={time}", self.scenario.id);
        let actions = self.scenario.rules[rule].actions.clone();
        actions
            .into_iter()
            .map(|action| {
                let action = match action {
                    Action::Inject(template) => {
                        let duration = match template.duration() {
                            Some(Param::Fixed(d)) => Some(*d),
                            Some(Param::Sample { sample }) => {
                                Some(self.sample(sample).expect("validated on load"))
                            }
                            None => None,
                        };
                        BoundAction::Inject(template.bind(duration))
                    }
                    Action::Direct(directive) => BoundAction::Direct(directive),
                };
                Firing { rule, time, action }
            })
            .collect()
    }
}
