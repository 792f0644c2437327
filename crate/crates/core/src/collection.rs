//! Keyed, insertion-ordered component storage.
//!
//! A [`ComponentCollection`] behaves like a map that remembers insertion
//! order and can also be addressed by position. Items live in slots; a
//! [`Handle`] names a slot, so a handle taken before a
//! [`replace`](ComponentCollection::replace) resolves to the new item.

use std::collections::HashMap;
use std::marker::PhantomData;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CollectionError {
    #[error("duplicate key '{0}'")]
    DuplicateKey(String),
    #[error("missing key '{0}'")]
    MissingKey(String),
}

/// A stable reference to one slot of a [`ComponentCollection`].
pub struct Handle<T> {
    slot: usize,
    _marker: PhantomData<fn() -> T>,
}

impl<T> Handle<T> {
    fn new(slot: usize) -> Self {
        Handle { slot, _marker: PhantomData }
    }
}

impl<T> Clone for Handle<T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Handle<T> {}

impl<T> PartialEq for Handle<T> {
    fn eq(&self, other: &Self) -> bool {
        self.slot == other.slot
    }
}

impl<T> Eq for Handle<T> {}

impl<T> std::fmt::Debug for Handle<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Handle({})", self.slot)
    }
}

#[derive(Debug, Clone)]
struct Slot<T> {
    key: String,
    item: Option<T>,
}

/// Ordered map from string keys to items, addressable by key, position or handle.
#[derive(Debug, Clone)]
pub struct ComponentCollection<T> {
    slots: Vec<Slot<T>>,
    order: Vec<usize>,
    index: HashMap<String, usize>,
}

impl<T> Default for ComponentCollection<T> {
    fn default() -> Self {
        ComponentCollection { slots: Vec::new(), order: Vec::new(), index: HashMap::new() }
    }
}

impl<T> ComponentCollection<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    /// Appends `item` under `key`.
    pub fn insert(&mut self, key: impl Into<String>, item: T) -> Result<Handle<T>, CollectionError> {
        let key = key.into();
        if self.index.contains_key(&key) {
            return Err(CollectionError::DuplicateKey(key));
        }
        let slot = self.slots.len();
        self.slots.push(Slot { key: key.clone(), item: Some(item) });
        self.order.push(slot);
        self.index.insert(key, slot);
        Ok(Handle::new(slot))
    }

    /// Swaps in a new item for an existing key, returning the old one.
    /// Position and outstanding handles are unaffected.
    pub fn replace(&mut self, key: &str, item: T) -> Result<T, CollectionError> {
        let slot = *self.index.get(key).ok_or_else(|| CollectionError::MissingKey(key.to_string()))?;
        let old = self.slots[slot].item.replace(item);
        Ok(old.expect("indexed slot is live"))
    }

    pub fn remove(&mut self, key: &str) -> Result<T, CollectionError> {
        let slot = self.index.remove(key).ok_or_else(|| CollectionError::MissingKey(key.to_string()))?;
        self.order.retain(|&s| s != slot);
        Ok(self.slots[slot].item.take().expect("indexed slot is live"))
    }

    pub fn handle(&self, key: &str) -> Option<Handle<T>> {
        self.index.get(key).map(|&s| Handle::new(s))
    }

    pub fn resolve(&self, handle: Handle<T>) -> Option<&T> {
        self.slots.get(handle.slot).and_then(|s| s.item.as_ref())
    }

    pub fn resolve_mut(&mut self, handle: Handle<T>) -> Option<&mut T> {
        self.slots.get_mut(handle.slot).and_then(|s| s.item.as_mut())
    }

    pub fn get(&self, key: &str) -> Option<&T> {
        self.index.get(key).and_then(|&s| self.slots[s].item.as_ref())
    }

    pub fn get_mut(&mut self, key: &str) -> Option<&mut T> {
        match self.index.get(key) {
            Some(&s) => self.slots[s].item.as_mut(),
            None => None,
        }
    }

    /// The `n`-th live item in insertion order.
    pub fn get_by_index(&self, n: usize) -> Option<&T> {
        self.order.get(n).and_then(|&s| self.slots[s].item.as_ref())
    }

    pub fn get_by_index_mut(&mut self, n: usize) -> Option<&mut T> {
        match self.order.get(n) {
            Some(&s) => self.slots[s].item.as_mut(),
            None => None,
        }
    }

    /// Position of `key` in insertion order.
    pub fn position(&self, key: &str) -> Option<usize> {
        let slot = *self.index.get(key)?;
        self.order.iter().position(|&s| s == slot)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> + '_ {
        self.order.iter().map(move |&s| self.slots[s].key.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &T)> + '_ {
        self.order.iter().map(move |&s| {
            let slot = &self.slots[s];
            (slot.key.as_str(), slot.item.as_ref().expect("ordered slot is live"))
        })
    }

    pub fn values(&self) -> impl Iterator<Item = &T> + '_ {
        self.iter().map(|(_, v)| v)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        let order = &self.order;
        let mut live: Vec<Option<&mut T>> = self.slots.iter_mut().map(|s| s.item.as_mut()).collect();
        let mut out = Vec::with_capacity(order.len());
        for &s in order {
            if let Some(item) = live[s].take() {
                out.push(item);
            }
        }
        out.into_iter()
    }
}
