use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Name-keyed table of constructors for one family of interchangeable strategies.
///
/// `T` is the trait object produced; `A` is the argument every constructor receives.
pub struct Registry<T: ?Sized, A: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, fn(&A) -> Result<Box<T>>>,
}

impl<T: ?Sized, A: ?Sized> Registry<T, A> {
    pub fn new(kind: &'static str) -> Self {
        Registry { kind, entries: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &'static str, ctor: fn(&A) -> Result<Box<T>>) -> &mut Self {
        self.entries.insert(name, ctor);
        self
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn create(&self, name: &str, args: &A) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some(ctor) => ctor(args),
            None => Err(Error::Invalid(format!(
                "unknown {} '{}' (known: {})",
                self.kind,
                name,
                self.names().join(", ")
            ))),
        }
    }
}
