//! Named strategy lookup: each interchangeable algorithm is a trait object
//! constructed from the name given in config or on the command line.

use crate::error::{CoreError, Result};

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: Vec<(&'static str, fn() -> Box<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Adds or replaces the constructor registered under `name`.
    pub fn register(&mut self, name: &'static str, make: fn() -> Box<T>) -> &mut Self {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, make));
        self
    }

    pub fn create(&self, name: &str) -> Result<Box<T>> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, make)| make())
            .ok_or_else(|| CoreError::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().into_iter().map(String::from).collect(),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| *n == name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }
}
