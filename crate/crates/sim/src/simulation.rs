//! Discrete-event engine: dependency ranking, two-pass initialization and
//! timesteps made of scheduled and contingent updates in rank order.

use std::any::Any;
use std::cell::RefCell;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::io::Write;
use std::path::Path;
use std::rc::Rc;

use gridsim_core::event::Event;
use gridsim_core::time::Time;
use log::debug;
use thiserror::Error;

pub type ComponentError = Box<dyn std::error::Error>;
pub type ComponentRef = Rc<RefCell<dyn SimComponent>>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("duplicate component id '{0}'")]
    DuplicateId(String),
    #[error("unknown component '{0}'")]
    UnknownId(String),
    #[error("component '{component}' depends on unknown component '{missing}'")]
    MissingDependency { component: String, missing: String },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    DependencyCycle(Vec<String>),
    #[error("component '{id}' is not a {expected}")]
    WrongType { id: String, expected: &'static str },
    #[error("simulation is not initialized")]
    NotInitialized,
    #[error("no pending update")]
    NoPendingUpdate,
    #[error("'{0}' flagged outside an active timestep")]
    NoActiveTimestep(String),
    #[error("component '{id}' asked for an update at {next}, not after the current time {time}")]
    NonIncreasingTime { id: String, time: Time, next: Time },
    #[error("contingent updates at {time} still pending after {rounds} rounds")]
    Livelock { time: Time, rounds: usize },
    #[error("component '{id}' at {time}: {source}")]
    Component {
        id: String,
        time: Time,
        #[source]
        source: ComponentError,
    },
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UpdateKind {
    Scheduled,
    Contingent,
}

impl UpdateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UpdateKind::Scheduled => "scheduled",
            UpdateKind::Contingent => "contingent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateRecord {
    pub time: Time,
    pub id: String,
    pub kind: UpdateKind,
    pub rank: usize,
}

impl UpdateRecord {
    /// One line of the update-log CSV.
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{}", self.time, self.id, self.kind.as_str(), self.rank)
    }
}

pub const UPDATE_LOG_HEADER: &str = "time,component_id,kind,rank";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestepRecord {
    pub time: Time,
    pub updates: Vec<UpdateRecord>,
}

pub type Sink = Box<dyn FnMut(&TimestepRecord) -> std::io::Result<()>>;

/// Sink writing the update log as CSV, header first.
pub fn update_log_sink<W: Write + 'static>(mut out: W) -> Sink {
    let mut header = true;
    Box::new(move |rec: &TimestepRecord| {
        if std::mem::take(&mut header) {
            writeln!(out, "{UPDATE_LOG_HEADER}")?;
        }
        for u in &rec.updates {
            writeln!(out, "{}", u.csv_line())?;
        }
        out.flush()
    })
}

/// Events every component owns. Triggering `needs_update` flags the owner
/// for a contingent update; the engine triggers `did_update` after each
/// update of the owner.
#[derive(Debug, Clone)]
pub struct ComponentEvents {
    pub needs_update: Event,
    pub did_update: Event,
}

impl ComponentEvents {
    pub fn new(id: &str) -> Self {
        ComponentEvents {
            needs_update: Event::new(format!("{id} needs update")),
            did_update: Event::new(format!("{id} did update")),
        }
    }
}

pub trait SimComponent {
    fn id(&self) -> &str;

    fn kind(&self) -> &'static str;

    fn events(&self) -> &ComponentEvents;

    /// Components that must update before this one at the same time.
    fn dependencies(&self) -> Vec<String> {
        Vec::new()
    }

    /// Components that must update after this one at the same time.
    fn dependents(&self) -> Vec<String> {
        Vec::new()
    }

    /// First pass: set the starting state.
    fn initialize(&mut self, _start: Time) -> Result<(), ComponentError> {
        Ok(())
    }

    /// Second pass: resolve references to other components and register
    /// actions on their events.
    fn link(&mut self, _ctx: &LinkContext<'_>) -> Result<(), ComponentError> {
        Ok(())
    }

    /// `None` means no scheduled update.
    fn next_update_time(&self) -> Option<Time>;

    fn update(&mut self, t: Time, kind: UpdateKind) -> Result<(), ComponentError>;

    /// Header of the output channel, if the component has one.
    fn channel(&self) -> Option<Vec<String>> {
        None
    }

    /// Appends channel rows at the end of a timestep in which it updated.
    fn record(&mut self, _t: Time, _rows: &mut Vec<Vec<String>>) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Active(Time),
}

struct Queue {
    phase: Phase,
    index: HashMap<String, usize>,
    rank: Vec<usize>,
    /// Authoritative scheduled time per component; heap entries that
    /// disagree are stale.
    pending: Vec<Option<Time>>,
    round: BTreeSet<(usize, usize)>,
    next_round: BTreeSet<(usize, usize)>,
    cursor: Option<(usize, usize)>,
}

/// Cheap handle for flagging contingent updates from inside components
/// and event actions.
#[derive(Clone)]
pub struct SimHandle(Rc<RefCell<Queue>>);

impl std::fmt::Debug for SimHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("SimHandle").field(&self.0.borrow().phase).finish()
    }
}

impl SimHandle {
    pub fn flag_contingent(&self, id: &str) -> Result<(), SimError> {
        let mut q = self.0.borrow_mut();
        let i = *q.index.get(id).ok_or_else(|| SimError::UnknownId(id.to_string()))?;
        let key = (q.rank[i], i);
        let Phase::Active(t) = q.phase else {
            return Err(SimError::NoActiveTimestep(id.to_string()));
        };
        if q.pending[i] == Some(t) {
            // absorbed by the scheduled update still to come
            return Ok(());
        }
        if q.cursor.is_none_or(|c| key > c) {
            q.round.insert(key);
        } else {
            q.next_round.insert(key);
        }
        Ok(())
    }

    /// Time of the active timestep.
    pub fn now(&self) -> Option<Time> {
        match self.0.borrow().phase {
            Phase::Idle => None,
            Phase::Active(t) => Some(t),
        }
    }
}

struct Entry {
    comp: ComponentRef,
    any: Rc<dyn Any>,
    kind: &'static str,
}

/// Access to the other components during the link pass.
pub struct LinkContext<'a> {
    entries: &'a [Entry],
    index: &'a HashMap<String, usize>,
    handle: &'a SimHandle,
    pub start: Time,
    pub end: Time,
}

impl LinkContext<'_> {
    pub fn handle(&self) -> SimHandle {
        self.handle.clone()
    }

    pub fn get<T: SimComponent + 'static>(&self, id: &str) -> Result<Rc<RefCell<T>>, SimError> {
        let e = &self.entries[*self.index.get(id).ok_or_else(|| SimError::UnknownId(id.to_string()))?];
        e.any
            .clone()
            .downcast::<RefCell<T>>()
            .map_err(|_| SimError::WrongType { id: id.to_string(), expected: std::any::type_name::<T>() })
    }

    pub fn get_dyn(&self, id: &str) -> Result<ComponentRef, SimError> {
        let i = *self.index.get(id).ok_or_else(|| SimError::UnknownId(id.to_string()))?;
        Ok(self.entries[i].comp.clone())
    }

    /// Events of another component.
    pub fn events(&self, id: &str) -> Result<ComponentEvents, SimError> {
        Ok(self.get_dyn(id)?.borrow().events().clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Channel {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Channel {
    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

pub struct Simulation {
    entries: Vec<Entry>,
    extra_deps: Vec<(String, String)>,
    queue: SimHandle,
    heap: BinaryHeap<Reverse<(Time, usize, usize)>>,
    pub start: Time,
    pub end: Time,
    current: Option<Time>,
    ranked: bool,
    initialized: bool,
    /// Contingent rounds allowed per timestep before reporting livelock.
    pub max_rounds: usize,
    pub record_outputs: bool,
    sinks: Vec<Sink>,
    channels: BTreeMap<String, Channel>,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("components", &self.entries.len())
            .field("start", &self.start)
            .field("end", &self.end)
            .field("current", &self.current)
            .finish()
    }
}

impl Simulation {
    pub fn new(start: Time, end: Time) -> Self {
        Simulation {
            entries: Vec::new(),
            extra_deps: Vec::new(),
            queue: SimHandle(Rc::new(RefCell::new(Queue {
                phase: Phase::Idle,
                index: HashMap::new(),
                rank: Vec::new(),
                pending: Vec::new(),
                round: BTreeSet::new(),
                next_round: BTreeSet::new(),
                cursor: None,
            }))),
            heap: BinaryHeap::new(),
            start,
            end,
            current: None,
            ranked: false,
            initialized: false,
            max_rounds: 100,
            record_outputs: true,
            sinks: Vec::new(),
            channels: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn add<T: SimComponent + 'static>(&mut self, component: T) -> Result<Rc<RefCell<T>>, SimError> {
        let id = component.id().to_string();
        let kind = component.kind();
        let rc = Rc::new(RefCell::new(component));
        let mut q = self.queue.0.borrow_mut();
        if q.index.contains_key(&id) {
            return Err(SimError::DuplicateId(id));
        }
        q.index.insert(id, self.entries.len());
        q.rank.push(0);
        q.pending.push(None);
        self.entries.push(Entry { comp: rc.clone(), any: rc.clone(), kind });
        self.ranked = false;
        Ok(rc)
    }

    /// Declares that `dependent` must update after `dependency`.
    pub fn add_dependency(&mut self, dependent: &str, dependency: &str) {
        self.extra_deps.push((dependent.to_string(), dependency.to_string()));
        self.ranked = false;
    }

    pub fn contains(&self, id: &str) -> bool {
        self.queue.0.borrow().index.contains_key(id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.comp.borrow().id().to_string()).collect()
    }

    pub fn component<T: SimComponent + 'static>(&self, id: &str) -> Result<Rc<RefCell<T>>, SimError> {
        let i = self.position(id)?;
        self.entries[i]
            .any
            .clone()
            .downcast::<RefCell<T>>()
            .map_err(|_| SimError::WrongType { id: id.to_string(), expected: std::any::type_name::<T>() })
    }

    pub fn component_kind(&self, id: &str) -> Result<&'static str, SimError> {
        Ok(self.entries[self.position(id)?].kind)
    }

    fn position(&self, id: &str) -> Result<usize, SimError> {
        self.queue.0.borrow().index.get(id).copied().ok_or_else(|| SimError::UnknownId(id.to_string()))
    }

    pub fn handle(&self) -> SimHandle {
        self.queue.clone()
    }

    pub fn current_time(&self) -> Option<Time> {
        self.current
    }

    pub fn rank(&self, id: &str) -> Result<usize, SimError> {
        let i = self.position(id)?;
        Ok(self.queue.0.borrow().rank[i])
    }

    pub fn add_sink(&mut self, sink: Sink) {
        self.sinks.push(sink);
    }

    pub fn channels(&self) -> &BTreeMap<String, Channel> {
        &self.channels
    }

    /// Writes one `<component id>.csv` per output channel into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>, SimError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (id, ch) in &self.channels {
            let path = dir.join(format!("{id}.csv"));
            std::fs::write(&path, ch.to_csv())?;
            written.push(path);
        }
        Ok(written)
    }

    /// Ranks components by longest dependency path; equal ranks keep
    /// insertion order.
    pub fn rank_components(&mut self) -> Result<(), SimError> {
        let ids = self.ids();
        let index = self.queue.0.borrow().index.clone();
        let n = ids.len();
        let mut deps: Vec<Vec<usize>> = vec![Vec::new(); n];
        let lookup = |owner: &str, id: &str| {
            index.get(id).copied().ok_or_else(|| SimError::MissingDependency {
                component: owner.to_string(),
                missing: id.to_string(),
            })
        };
        for (i, e) in self.entries.iter().enumerate() {
            let c = e.comp.borrow();
            for d in c.dependencies() {
                deps[i].push(lookup(&ids[i], &d)?);
            }
            for d in c.dependents() {
                let j = lookup(&ids[i], &d)?;
                deps[j].push(i);
            }
        }
        for (dependent, dependency) in &self.extra_deps {
            let i = index.get(dependent).copied().ok_or_else(|| SimError::UnknownId(dependent.clone()))?;
            deps[i].push(lookup(dependent, dependency)?);
        }

        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        fn visit(
            i: usize,
            deps: &[Vec<usize>],
            mark: &mut [Mark],
            rank: &mut [usize],
            stack: &mut Vec<usize>,
            ids: &[String],
        ) -> Result<(), SimError> {
            match mark[i] {
                Mark::Done => return Ok(()),
                Mark::Active => {
                    let from = stack.iter().position(|&s| s == i).unwrap_or(0);
                    let mut cycle: Vec<String> = stack[from..].iter().map(|&s| ids[s].clone()).collect();
                    cycle.push(ids[i].clone());
                    return Err(SimError::DependencyCycle(cycle));
                }
                Mark::New => {}
            }
            mark[i] = Mark::Active;
            stack.push(i);
            let mut r = 0;
            for &d in &deps[i] {
                visit(d, deps, mark, rank, stack, ids)?;
                r = r.max(rank[d] + 1);
            }
            stack.pop();
            rank[i] = r;
            mark[i] = Mark::Done;
            Ok(())
        }

        let mut mark = vec![Mark::New; n];
        let mut rank = vec![0; n];
        let mut stack = Vec::new();
        for i in 0..n {
            visit(i, &deps, &mut mark, &mut rank, &mut stack, &ids)?;
        }
        self.queue.0.borrow_mut().rank = rank;
        self.ranked = true;
        Ok(())
    }

    /// Component indices in (rank, insertion) order.
    fn ordered(&self) -> Vec<usize> {
        let q = self.queue.0.borrow();
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by_key(|&i| (q.rank[i], i));
        order
    }

    /// Ranks if needed, then runs the initialize and link passes and
    /// collects the first scheduled update of every component.
    pub fn initialize(&mut self) -> Result<(), SimError> {
        if !self.ranked {
            self.rank_components()?;
        }
        let order = self.ordered();
        let start = self.start;
        let wrap = |id: String, source: ComponentError| SimError::Component { id, time: start, source };
        for &i in &order {
            let mut c = self.entries[i].comp.borrow_mut();
            let id = c.id().to_string();
            c.initialize(start).map_err(|e| wrap(id, e))?;
        }
        let index = self.queue.0.borrow().index.clone();
        for &i in &order {
            let ctx = LinkContext { entries: &self.entries, index: &index, handle: &self.queue, start, end: self.end };
            let mut c = self.entries[i].comp.borrow_mut();
            let id = c.id().to_string();
            c.link(&ctx).map_err(|e| wrap(id.clone(), e))?;
            let handle = self.queue.clone();
            let own = id.clone();
            c.events().needs_update.register("simulation", move || Ok(handle.flag_contingent(&own)?));
        }
        self.heap.clear();
        for &i in &order {
            let next = self.entries[i].comp.borrow().next_update_time();
            self.schedule(i, next);
        }
        for (i, e) in self.entries.iter().enumerate() {
            if let Some(header) = e.comp.borrow().channel() {
                let id = e.comp.borrow().id().to_string();
                debug!("component {id} rank {} has an output channel", self.queue.0.borrow().rank[i]);
                self.channels.insert(id, Channel { header, rows: Vec::new() });
            }
        }
        self.current = None;
        self.initialized = true;
        Ok(())
    }

    fn schedule(&mut self, i: usize, next: Option<Time>) {
        let mut q = self.queue.0.borrow_mut();
        if q.pending[i] == next {
            return;
        }
        q.pending[i] = next;
        if let Some(t) = next {
            self.heap.push(Reverse((t, q.rank[i], i)));
        }
    }

    /// Drops stale heap entries and returns the earliest valid one.
    fn peek_valid(&mut self) -> Option<(Time, usize, usize)> {
        let q = self.queue.0.borrow();
        while let Some(&Reverse((t, r, i))) = self.heap.peek() {
            if q.pending[i] == Some(t) {
                return Some((t, r, i));
            }
            self.heap.pop();
        }
        None
    }

    /// Time of the next scheduled update.
    pub fn next_time(&mut self) -> Option<Time> {
        self.peek_valid().map(|(t, _, _)| t)
    }

    /// Runs one update and its did_update actions, then refreshes the
    /// component's schedule.
    fn run_update(&mut self, i: usize, t: Time, kind: UpdateKind, log: &mut Vec<UpdateRecord>) -> Result<(), SimError> {
        let comp = self.entries[i].comp.clone();
        let (id, did_update) = {
            let c = comp.borrow();
            (c.id().to_string(), c.events().did_update.clone())
        };
        let rank = self.queue.0.borrow().rank[i];
        debug!("t={t} {} update of {id} (rank {rank})", kind.as_str());
        comp.borrow_mut().update(t, kind).map_err(|source| SimError::Component { id: id.clone(), time: t, source })?;
        log.push(UpdateRecord { time: t, id: id.clone(), kind, rank });
        did_update.trigger().map_err(|source| SimError::Component { id: id.clone(), time: t, source })?;
        let next = comp.borrow().next_update_time();
        if let Some(n) = next.filter(|&n| n <= t) {
            return Err(SimError::NonIncreasingTime { id, time: t, next: n });
        }
        self.schedule(i, next);
        Ok(())
    }

    /// Advances to the earliest scheduled time and completes that timestep.
    pub fn do_timestep(&mut self) -> Result<Time, SimError> {
        if !self.initialized {
            return Err(SimError::NotInitialized);
        }
        let (t, _, _) = self.peek_valid().ok_or(SimError::NoPendingUpdate)?;
        {
            let mut q = self.queue.0.borrow_mut();
            q.phase = Phase::Active(t);
            q.round.clear();
            q.next_round.clear();
            q.cursor = None;
        }
        let result = self.timestep_at(t);
        {
            let mut q = self.queue.0.borrow_mut();
            q.phase = Phase::Idle;
            q.cursor = None;
        }
        let log = result?;
        self.current = Some(t);

        if self.record_outputs {
            let mut seen = BTreeSet::new();
            for rec in &log {
                if !seen.insert(rec.id.clone()) {
                    continue;
                }
                if let Some(ch) = self.channels.get_mut(&rec.id) {
                    let i = self.queue.0.borrow().index[&rec.id];
                    self.entries[i].comp.borrow_mut().record(t, &mut ch.rows);
                }
            }
        }
        let record = TimestepRecord { time: t, updates: log };
        for sink in &mut self.sinks {
            sink(&record)?;
        }
        Ok(t)
    }

    /// One sweep in (rank, insertion) order over the components scheduled
    /// at `t` and those flagged so far, then further rounds while flags
    /// land behind the sweep position.
    fn timestep_at(&mut self, t: Time) -> Result<Vec<UpdateRecord>, SimError> {
        let mut log = Vec::new();
        let mut rounds = 0;
        loop {
            rounds += 1;
            if rounds > self.max_rounds {
                return Err(SimError::Livelock { time: t, rounds: self.max_rounds });
            }
            loop {
                let scheduled = self.peek_valid().filter(|e| e.0 == t).map(|(_, r, i)| (r, i));
                let flagged = self.queue.0.borrow().round.first().copied();
                let (key, kind) = match (scheduled, flagged) {
                    (Some(s), Some(f)) if f < s => (f, UpdateKind::Contingent),
                    (Some(s), _) => (s, UpdateKind::Scheduled),
                    (None, Some(f)) => (f, UpdateKind::Contingent),
                    (None, None) => break,
                };
                {
                    let mut q = self.queue.0.borrow_mut();
                    q.round.remove(&key);
                    q.cursor = Some(key);
                    if kind == UpdateKind::Scheduled {
                        q.pending[key.1] = None;
                    }
                }
                if kind == UpdateKind::Scheduled {
                    self.heap.pop();
                }
                self.run_update(key.1, t, kind, &mut log)?;
            }
            let mut q = self.queue.0.borrow_mut();
            q.cursor = None;
            if q.next_round.is_empty() {
                break;
            }
            let next = std::mem::take(&mut q.next_round);
            q.round = next;
        }
        Ok(log)
    }

    /// Flags a component for a contingent update in the active timestep.
    pub fn flag_contingent(&self, id: &str) -> Result<(), SimError> {
        self.queue.flag_contingent(id)
    }

    /// Runs timesteps up to and including the end time. Returns the number
    /// of timesteps completed.
    pub fn run(&mut self) -> Result<usize, SimError> {
        if !self.initialized {
            self.initialize()?;
        }
        let mut steps = 0;
        if self.end < self.start {
            return Ok(0);
        }
        while let Some(t) = self.next_time() {
            if t > self.end {
                break;
            }
            self.do_timestep()?;
            steps += 1;
        }
        Ok(steps)
    }
}
