use std::time::{Duration, Instant};

use gridsim_core::time::Time;

use crate::simulation::{ComponentError, ComponentEvents, SimComponent, UpdateKind};

/// Paces the simulation against the wall clock: each update sleeps until
/// `(t - start) / speed` seconds have elapsed since the first update.
pub struct RealTimeClock {
    id: String,
    events: ComponentEvents,
    pub dt: Time,
    pub speed: f64,
    origin: Option<(Instant, Time)>,
    next: Option<Time>,
}

impl RealTimeClock {
    pub fn new(id: impl Into<String>, dt: Time, speed: f64) -> Self {
        let id = id.into();
        RealTimeClock { events: ComponentEvents::new(&id), id, dt: dt.max(1), speed, origin: None, next: None }
    }
}

impl SimComponent for RealTimeClock {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> &'static str {
        "real_time_clock"
    }

    fn events(&self) -> &ComponentEvents {
        &self.events
    }

    fn initialize(&mut self, start: Time) -> Result<(), ComponentError> {
        self.origin = None;
        self.next = Some(start);
        Ok(())
    }

    fn next_update_time(&self) -> Option<Time> {
        self.next
    }

    fn update(&mut self, t: Time, _kind: UpdateKind) -> Result<(), ComponentError> {
        let (wall, sim) = *self.origin.get_or_insert((Instant::now(), t));
        let target = Duration::from_secs_f64(((t - sim) as f64 / self.speed).max(0.0));
        if let Some(wait) = target.checked_sub(wall.elapsed()) {
            std::thread::sleep(wait);
        }
        self.next = Some(t + self.dt);
        Ok(())
    }
}
