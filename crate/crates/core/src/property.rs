//! Runtime-discoverable properties exchanged as JSON values.
//!
//! Types describe their properties once with a [`PropertyMap`] (shared by
//! every instance) by implementing [`HasProperties`]. Objects that need
//! properties defined per instance can carry a [`PropertyBag`], whose
//! getters and setters are closures over shared state.

use std::cell::RefCell;
use std::rc::Rc;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropertyError {
    #[error("unknown property '{0}'")]
    Unknown(String),
    #[error("property '{0}' is read-only")]
    ReadOnly(String),
    #[error("property '{name}': expected {expected}")]
    TypeMismatch { name: String, expected: &'static str },
}

type Getter<T> = Box<dyn Fn(&T) -> Value + Send + Sync>;
type Setter<T> = Box<dyn Fn(&mut T, &Value) -> Result<(), PropertyError> + Send + Sync>;

struct Property<T> {
    name: String,
    get: Getter<T>,
    set: Option<Setter<T>>,
}

/// Property definitions for every instance of `T`.
pub struct PropertyMap<T> {
    props: Vec<Property<T>>,
}

impl<T> Default for PropertyMap<T> {
    fn default() -> Self {
        PropertyMap { props: Vec::new() }
    }
}

impl<T> PropertyMap<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn read_only(mut self, name: &str, get: impl Fn(&T) -> Value + Send + Sync + 'static) -> Self {
        self.props.push(Property { name: name.to_string(), get: Box::new(get), set: None });
        self
    }

    pub fn read_write(
        mut self,
        name: &str,
        get: impl Fn(&T) -> Value + Send + Sync + 'static,
        set: impl Fn(&mut T, &Value) -> Result<(), PropertyError> + Send + Sync + 'static,
    ) -> Self {
        self.props.push(Property { name: name.to_string(), get: Box::new(get), set: Some(Box::new(set)) });
        self
    }

    pub fn names(&self) -> Vec<&str> {
        self.props.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn is_settable(&self, name: &str) -> Option<bool> {
        self.find(name).map(|p| p.set.is_some())
    }

    fn find(&self, name: &str) -> Option<&Property<T>> {
        self.props.iter().find(|p| p.name == name)
    }

    pub fn get(&self, obj: &T, name: &str) -> Result<Value, PropertyError> {
        let p = self.find(name).ok_or_else(|| PropertyError::Unknown(name.to_string()))?;
        Ok((p.get)(obj))
    }

    pub fn set(&self, obj: &mut T, name: &str, value: &Value) -> Result<(), PropertyError> {
        let p = self.find(name).ok_or_else(|| PropertyError::Unknown(name.to_string()))?;
        let set = p.set.as_ref().ok_or_else(|| PropertyError::ReadOnly(name.to_string()))?;
        set(obj, value)
    }
}

/// Implemented by types with class-level properties.
pub trait HasProperties: Sized + 'static {
    fn property_map() -> &'static PropertyMap<Self>;

    fn property_names(&self) -> Vec<&'static str> {
        Self::property_map().names()
    }

    fn get_property(&self, name: &str) -> Result<Value, PropertyError> {
        Self::property_map().get(self, name)
    }

    fn set_property(&mut self, name: &str, value: &Value) -> Result<(), PropertyError> {
        Self::property_map().set(self, name, value)
    }
}

type DynGetter = Box<dyn Fn() -> Value>;
type DynSetter = Box<dyn Fn(&Value) -> Result<(), PropertyError>>;

/// Per-instance properties backed by closures.
#[derive(Default)]
pub struct PropertyBag {
    props: Vec<(String, DynGetter, Option<DynSetter>)>,
}

impl PropertyBag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_read_only(&mut self, name: &str, get: impl Fn() -> Value + 'static) {
        self.props.push((name.to_string(), Box::new(get), None));
    }

    pub fn add_read_write(
        &mut self,
        name: &str,
        get: impl Fn() -> Value + 'static,
        set: impl Fn(&Value) -> Result<(), PropertyError> + 'static,
    ) {
        self.props.push((name.to_string(), Box::new(get), Some(Box::new(set))));
    }

    /// Exposes a shared number as a settable property.
    pub fn add_shared_f64(&mut self, name: &str, cell: Rc<RefCell<f64>>) {
        let getter = cell.clone();
        let owned = name.to_string();
        self.add_read_write(
            name,
            move || Value::from(*getter.borrow()),
            move |v| {
                *cell.borrow_mut() = expect_f64(&owned, v)?;
                Ok(())
            },
        );
    }

    pub fn names(&self) -> Vec<&str> {
        self.props.iter().map(|p| p.0.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Result<Value, PropertyError> {
        let p = self.props.iter().find(|p| p.0 == name).ok_or_else(|| PropertyError::Unknown(name.to_string()))?;
        Ok((p.1)())
    }

    pub fn set(&self, name: &str, value: &Value) -> Result<(), PropertyError> {
        let p = self.props.iter().find(|p| p.0 == name).ok_or_else(|| PropertyError::Unknown(name.to_string()))?;
        let set = p.2.as_ref().ok_or_else(|| PropertyError::ReadOnly(name.to_string()))?;
        set(value)
    }
}

pub fn expect_f64(name: &str, v: &Value) -> Result<f64, PropertyError> {
    v.as_f64().ok_or(PropertyError::TypeMismatch { name: name.to_string(), expected: "number" })
}

pub fn expect_str<'a>(name: &str, v: &'a Value) -> Result<&'a str, PropertyError> {
    v.as_str().ok_or(PropertyError::TypeMismatch { name: name.to_string(), expected: "string" })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::OnceLock;

    struct Thing {
        level: f64,
        label: String,
    }

    impl HasProperties for Thing {
        fn property_map() -> &'static PropertyMap<Self> {
            static MAP: OnceLock<PropertyMap<Thing>> = OnceLock::new();
            MAP.get_or_init(|| {
                PropertyMap::new().read_only("label", |t: &Thing| json!(t.label)).read_write(
                    "level",
                    |t: &Thing| json!(t.level),
                    |t: &mut Thing, v| {
                        t.level = expect_f64("level", v)?;
                        Ok(())
                    },
                )
            })
        }
    }

    #[test]
    fn class_properties() {
        let mut t = Thing { level: 1.0, label: "x".into() };
        assert_eq!(t.property_names(), vec!["label", "level"]);
        t.set_property("level", &json!(2.5)).unwrap();
        assert_eq!(t.get_property("level").unwrap(), json!(2.5));
        assert_eq!(t.set_property("label", &json!("y")), Err(PropertyError::ReadOnly("label".into())));
        assert_eq!(t.get_property("no_such"), Err(PropertyError::Unknown("no_such".into())));
        assert!(matches!(t.set_property("level", &json!("high")), Err(PropertyError::TypeMismatch { .. })));
    }

    #[test]
    fn instance_properties() {
        let cell = Rc::new(RefCell::new(3.0));
        let mut bag = PropertyBag::new();
        bag.add_shared_f64("gain", cell.clone());
        bag.add_read_only("const", || json!(7));
        bag.set("gain", &json!(4.0)).unwrap();
        assert_eq!(*cell.borrow(), 4.0);
        assert_eq!(bag.get("gain").unwrap(), json!(4.0));
        assert_eq!(bag.set("const", &json!(1)), Err(PropertyError::ReadOnly("const".into())));
        assert_eq!(bag.names(), vec!["gain", "const"]);
    }
}
