//! Scripted component that follows a fixed schedule, flags other
//! components when it updates and logs every call. Used to exercise the
//! engine.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use gridsim_core::time::Time;

use crate::simulation::{ComponentError, ComponentEvents, LinkContext, SimComponent, SimHandle, UpdateKind};

pub type CallLog = Rc<RefCell<Vec<(Time, String, UpdateKind)>>>;

pub struct Scripted {
    id: String,
    events: ComponentEvents,
    deps: Vec<String>,
    schedule: Vec<Time>,
    /// Targets flagged on every update, or only on updates at given times.
    flags: Vec<String>,
    flags_at: BTreeMap<Time, Vec<String>>,
    log: CallLog,
    handle: Option<SimHandle>,
    next: Option<Time>,
}

impl Scripted {
    pub fn new(id: impl Into<String>, log: CallLog) -> Self {
        let id = id.into();
        Scripted {
            events: ComponentEvents::new(&id),
            id,
            deps: Vec::new(),
            schedule: Vec::new(),
            flags: Vec::new(),
            flags_at: BTreeMap::new(),
            log,
            handle: None,
            next: None,
        }
    }

    pub fn depends_on(mut self, ids: &[&str]) -> Self {
        self.deps.extend(ids.iter().map(|s| s.to_string()));
        self
    }

    pub fn at(mut self, times: &[Time]) -> Self {
        self.schedule.extend_from_slice(times);
        self.schedule.sort_unstable();
        self.schedule.dedup();
        self
    }

    pub fn flags(mut self, ids: &[&str]) -> Self {
        self.flags.extend(ids.iter().map(|s| s.to_string()));
        self
    }

    pub fn flags_at(mut self, t: Time, ids: &[&str]) -> Self {
        self.flags_at.entry(t).or_default().extend(ids.iter().map(|s| s.to_string()));
        self
    }

    fn after(&self, t: Time) -> Option<Time> {
        self.schedule.iter().copied().find(|&s| s > t)
    }
}

impl SimComponent for Scripted {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        "scripted"
    }

    fn events(&self) -> &ComponentEvents {
        &self.events
    }

    fn dependencies(&self) -> Vec<String> {
        self.deps.clone()
    }

    fn initialize(&mut self, start: Time) -> Result<(), ComponentError> {
        self.next = self.schedule.iter().copied().find(|&s| s >= start);
        Ok(())
    }

    fn link(&mut self, ctx: &LinkContext<'_>) -> Result<(), ComponentError> {
        self.handle = Some(ctx.handle());
        Ok(())
    }

    fn next_update_time(&self) -> Option<Time> {
        self.next
    }

    fn update(&mut self, t: Time, kind: UpdateKind) -> Result<(), ComponentError> {
        self.log.borrow_mut().push((t, self.id.clone(), kind));
        let handle = self.handle.as_ref().expect("linked before updates");
        for target in self.flags.iter().chain(self.flags_at.get(&t).into_iter().flatten()) {
            handle.flag_contingent(target)?;
        }
        self.next = self.after(t);
        Ok(())
    }
}
