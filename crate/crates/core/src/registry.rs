//! Name-keyed registry of interchangeable strategy constructors.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Maps stable names to constructors producing `Box<T>`.
pub struct Registry<T: ?Sized, A: ?Sized = ()> {
    kind: &'static str,
    entries: BTreeMap<&'static str, fn(&A) -> Box<T>>,
}

impl<T: ?Sized, A: ?Sized> Registry<T, A> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `ctor` under `name`, replacing any earlier entry.
    pub fn register(&mut self, name: &'static str, ctor: fn(&A) -> Box<T>) -> &mut Self {
        self.entries.insert(name, ctor);
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn build(&self, name: &str, args: &A) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some(ctor) => Ok(ctor(args)),
            None => Err(Error::UnknownName {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().collect::<Vec<_>>().join(", "),
            }),
        }
    }
}
