//! Execution traces produced by the simulator.

use serde::{Deserialize, Serialize};

use crate::duration::Time;
use crate::materialize::TaskKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Background weight prefetch; does not occupy the resource.
    Prefetch,
    /// Spin-wait on an event counter.
    Wait,
    /// Waiting for an outstanding prefetch before EXEC can start.
    Stall,
    Exec,
    Notify,
    Push,
    Pop,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Prefetch => "prefetch",
            Phase::Wait => "wait",
            Phase::Stall => "stall",
            Phase::Exec => "exec",
            Phase::Notify => "notify",
            Phase::Push => "push",
            Phase::Pop => "pop",
        }
    }

    /// Whether the phase keeps the resource doing useful or scheduling work.
    pub fn is_busy(self) -> bool {
        matches!(self, Phase::Exec | Phase::Notify | Phase::Push | Phase::Pop)
    }

    pub fn is_spin(self) -> bool {
        matches!(self, Phase::Wait | Phase::Stall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: Time,
    pub end: Time,
}

impl Interval {
    pub fn len(&self) -> Time {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseInterval {
    /// Index into [`Trace::tasks`]; `None` for work not tied to one task.
    pub task: Option<usize>,
    pub resource: usize,
    pub phase: Phase,
    pub start: Time,
    pub end: Time,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub key: TaskKey,
    pub func: String,
    pub resource: usize,
    /// Padding task from a larger sampled shape: WAIT/NOTIFY only.
    pub masked: bool,
    /// Time the task's program started on its resource.
    pub dispatch: Time,
    pub exec: Option<Interval>,
    /// Time the task's last instruction finished.
    pub end: Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedEventKind {
    Push,
    Pop,
    EmptyPoll,
    /// Runtime tensor values became visible.
    Publish,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedEvent {
    pub time: Time,
    pub kind: SchedEventKind,
    pub resource: Option<usize>,
    pub task: Option<TaskKey>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub mode: String,
    /// Resource names; SMs first, then the DMA channel.
    pub resources: Vec<String>,
    pub tasks: Vec<TaskRecord>,
    pub intervals: Vec<PhaseInterval>,
    pub events: Vec<SchedEvent>,
    pub makespan: Time,
    /// Counter value of every event element when the run ended.
    pub final_counters: Vec<u64>,
}

impl Trace {
    pub fn executed(&self) -> impl Iterator<Item = &TaskRecord> {
        self.tasks.iter().filter(|t| !t.masked)
    }

    pub fn task_by_key(&self, key: &TaskKey) -> Option<&TaskRecord> {
        self.tasks.iter().find(|t| !t.masked && &t.key == key)
    }

    pub fn events_of(&self, kind: SchedEventKind) -> impl Iterator<Item = &SchedEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn intervals_of(&self, phase: Phase) -> impl Iterator<Item = &PhaseInterval> {
        self.intervals.iter().filter(move |i| i.phase == phase)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}
