//! Event-action mechanism: observers register actions on an event and the
//! owner triggers it.
//!
//! An [`Event`] is a cheap, clonable handle onto shared state, so actions
//! may register or deregister on the same event while it is being
//! triggered. Such changes take effect from the next trigger.

use std::cell::RefCell;
use std::rc::Rc;

use thiserror::Error;

pub type ActionError = Box<dyn std::error::Error>;
pub type ActionResult = Result<(), ActionError>;
type Action = Box<dyn FnMut() -> ActionResult>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EventError {
    #[error("stale registration token {0}")]
    StaleToken(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Registration(u64);

struct Entry {
    token: u64,
    owner: String,
    action: Action,
}

#[derive(Default)]
struct Inner {
    description: String,
    entries: Vec<Entry>,
    next_token: u64,
    live: Vec<u64>,
    triggering: bool,
    // removals requested while the list was taken out for triggering
    pending_removal: Vec<u64>,
}

#[derive(Clone, Default)]
pub struct Event {
    inner: Rc<RefCell<Inner>>,
}

impl std::fmt::Debug for Event {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Event")
            .field("description", &inner.description)
            .field("actions", &inner.live.len())
            .finish()
    }
}

impl Event {
    pub fn new(description: impl Into<String>) -> Self {
        let ev = Event::default();
        ev.inner.borrow_mut().description = description.into();
        ev
    }

    pub fn description(&self) -> String {
        self.inner.borrow().description.clone()
    }

    pub fn action_count(&self) -> usize {
        self.inner.borrow().live.len()
    }

    pub fn register(&self, owner: impl Into<String>, action: impl FnMut() -> ActionResult + 'static) -> Registration {
        let mut inner = self.inner.borrow_mut();
        let token = inner.next_token;
        inner.next_token += 1;
        inner.live.push(token);
        inner.entries.push(Entry { token, owner: owner.into(), action: Box::new(action) });
        Registration(token)
    }

    pub fn deregister(&self, reg: Registration) -> Result<(), EventError> {
        let mut inner = self.inner.borrow_mut();
        let pos = inner.live.iter().position(|&t| t == reg.0).ok_or(EventError::StaleToken(reg.0))?;
        inner.live.remove(pos);
        if inner.triggering {
            inner.pending_removal.push(reg.0);
        } else {
            inner.entries.retain(|e| e.token != reg.0);
        }
        Ok(())
    }

    /// Owners of the registered actions, in registration order.
    pub fn owners(&self) -> Vec<String> {
        let inner = self.inner.borrow();
        inner.entries.iter().filter(|e| inner.live.contains(&e.token)).map(|e| e.owner.clone()).collect()
    }

    /// Runs every registered action once, in registration order. The first
    /// failing action aborts the trigger and its error is returned.
    pub fn trigger(&self) -> ActionResult {
        let mut running = {
            let mut inner = self.inner.borrow_mut();
            inner.triggering = true;
            std::mem::take(&mut inner.entries)
        };
        let mut result = Ok(());
        for entry in running.iter_mut() {
            let skip = self.inner.borrow().pending_removal.contains(&entry.token);
            if skip {
                continue;
            }
            if let Err(e) = (entry.action)() {
                result = Err(e);
                break;
            }
        }
        let mut inner = self.inner.borrow_mut();
        let added = std::mem::take(&mut inner.entries);
        running.extend(added);
        let removed = std::mem::take(&mut inner.pending_removal);
        running.retain(|e| !removed.contains(&e.token));
        inner.entries = running;
        inner.triggering = false;
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counter() -> (Rc<RefCell<u32>>, impl FnMut() -> ActionResult) {
        let c = Rc::new(RefCell::new(0));
        let c2 = c.clone();
        (c, move || {
            *c2.borrow_mut() += 1;
            Ok(())
        })
    }

    #[test]
    fn trigger_runs_each_action_once() {
        let ev = Event::new("changed");
        let (a, fa) = counter();
        let (b, fb) = counter();
        ev.register("a", fa);
        ev.register("b", fb);
        ev.trigger().unwrap();
        assert_eq!((*a.borrow(), *b.borrow()), (1, 1));
    }

    #[test]
    fn empty_trigger_is_noop() {
        Event::new("nothing").trigger().unwrap();
    }

    #[test]
    fn registration_order_is_execution_order() {
        let ev = Event::new("e");
        let log = Rc::new(RefCell::new(Vec::new()));
        for name in ["A", "B"] {
            let log = log.clone();
            ev.register(name, move || {
                log.borrow_mut().push(name);
                Ok(())
            });
        }
        ev.trigger().unwrap();
        assert_eq!(*log.borrow(), vec!["A", "B"]);
    }

    #[test]
    fn deregister_stops_future_runs() {
        let ev = Event::new("e");
        let (c, f) = counter();
        let reg = ev.register("x", f);
        ev.trigger().unwrap();
        ev.deregister(reg).unwrap();
        ev.trigger().unwrap();
        assert_eq!(*c.borrow(), 1);
        assert_eq!(ev.deregister(reg), Err(EventError::StaleToken(0)));
    }

    #[test]
    fn deregistering_one_owner_keeps_other() {
        let ev = Event::new("e");
        let (a, fa) = counter();
        let (b, fb) = counter();
        let ra = ev.register("a", fa);
        ev.register("b", fb);
        ev.deregister(ra).unwrap();
        ev.trigger().unwrap();
        assert_eq!((*a.borrow(), *b.borrow()), (0, 1));
        assert_eq!(ev.owners(), vec!["b".to_string()]);
    }

    #[test]
    fn registration_during_trigger_deferred() {
        let ev = Event::new("e");
        let (c, _) = counter();
        let ev2 = ev.clone();
        let c2 = c.clone();
        let mut done = false;
        ev.register("adder", move || {
            if !done {
                done = true;
                let c3 = c2.clone();
                ev2.register("late", move || {
                    *c3.borrow_mut() += 1;
                    Ok(())
                });
            }
            Ok(())
        });
        ev.trigger().unwrap();
        assert_eq!(*c.borrow(), 0);
        ev.trigger().unwrap();
        assert_eq!(*c.borrow(), 1);
    }

    #[test]
    fn action_failure_propagates() {
        let ev = Event::new("e");
        ev.register("bad", || Err("boom".into()));
        assert_eq!(ev.trigger().unwrap_err().to_string(), "boom");
        assert_eq!(ev.action_count(), 1);
    }

    #[test]
    fn trigger_counts_match_registrations() {
        let ev = Event::new("e");
        let counters: Vec<_> = (0..7).map(|_| counter()).collect::<Vec<_>>();
        let mut cells = Vec::new();
        for (i, (c, f)) in counters.into_iter().enumerate() {
            ev.register(format!("o{i}"), f);
            cells.push(c);
        }
        for _ in 0..3 {
            ev.trigger().unwrap();
        }
        assert!(cells.iter().all(|c| *c.borrow() == 3));
    }
}
