//! Name-keyed registries of strategy objects built at runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Numeric options handed to a strategy constructor.
pub type Options = BTreeMap<String, f64>;

type Builder<T> = Box<dyn Fn(&Options) -> Result<Arc<T>> + Send + Sync>;

struct Entry<T: ?Sized> {
    summary: &'static str,
    keys: &'static [&'static str],
    build: Builder<T>,
}

pub struct Registry<T: ?Sized> {
    what: &'static str,
    entries: BTreeMap<&'static str, Entry<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(what: &'static str) -> Self {
        Registry { what, entries: BTreeMap::new() }
    }

    /// Adds a strategy. `keys` lists the options the builder understands.
    pub fn register<F>(&mut self, name: &'static str, summary: &'static str, keys: &'static [&'static str], build: F) -> &mut Self
    where
        F: Fn(&Options) -> Result<Arc<T>> + Send + Sync + 'static,
    {
        self.entries.insert(name, Entry { summary, keys, build: Box::new(build) });
        self
    }

    pub fn build(&self, name: &str, opts: &Options) -> Result<Arc<T>> {
        let entry = self.entries.get(name).ok_or_else(|| Error::Unknown { what: self.what, name: name.into() })?;
        if let Some(bad) = opts.keys().find(|k| !entry.keys.contains(&k.as_str())) {
            return Err(Error::invalid(format!("{} `{name}` has no option `{bad}` (known: {})", self.what, entry.keys.join(", "))));
        }
        (entry.build)(opts)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn summaries(&self) -> impl Iterator<Item = (&'static str, &'static str)> + '_ {
        self.entries.iter().map(|(k, e)| (*k, e.summary))
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry").field("what", &self.what).field("names", &self.entries.keys().collect::<Vec<_>>()).finish()
    }
}

pub fn opt(opts: &Options, key: &str, default: f64) -> f64 {
    opts.get(key).copied().unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Shape: Send + Sync {
        fn area(&self) -> f64;
    }

    struct Square(f64);

    impl Shape for Square {
        fn area(&self) -> f64 {
            self.0 * self.0
        }
    }

    #[test]
    fn build_by_name() {
        let mut r: Registry<dyn Shape> = Registry::new("shape");
        r.register("square", "a square", &["side"], |o| Ok(Arc::new(Square(opt(o, "side", 1.0)))));
        let s = r.build("square", &Options::from([("side".into(), 3.0)])).unwrap();
        assert_eq!(s.area(), 9.0);
        assert!(matches!(r.build("circle", &Options::new()), Err(Error::Unknown { .. })));
        assert!(r.build("square", &Options::from([("radius".into(), 3.0)])).is_err());
        assert_eq!(r.names().collect::<Vec<_>>(), vec!["square"]);
    }
}
