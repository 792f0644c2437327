use gridsim_core::time::Time;

use crate::simulation::{ComponentError, ComponentEvents, SimComponent, UpdateKind};

/// Updates at a fixed interval from the start time and does nothing else.
pub struct Heartbeat {
    id: String,
    events: ComponentEvents,
    pub dt: Time,
    next: Option<Time>,
    count: usize,
}

impl Heartbeat {
    pub fn new(id: impl Into<String>, dt: Time) -> Self {
        let id = id.into();
        assert!(dt > 0, "heartbeat interval must be positive");
        Heartbeat { events: ComponentEvents::new(&id), id, dt, next: None, count: 0 }
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

impl SimComponent for Heartbeat {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        "heartbeat"
    }

    fn events(&self) -> &ComponentEvents {
        &self.events
    }

    fn initialize(&mut self, start: Time) -> Result<(), ComponentError> {
        self.next = Some(start);
        self.count = 0;
        Ok(())
    }

    fn next_update_time(&self) -> Option<Time> {
        self.next
    }

    fn update(&mut self, t: Time, kind: UpdateKind) -> Result<(), ComponentError> {
        if kind == UpdateKind::Scheduled {
            self.count += 1;
            self.next = Some(t + self.dt);
        }
        Ok(())
    }
}
