//! Unit-size object cache policies.
//!
//! A policy only tracks which keys are resident. Fetching, delays and
//! accounting live in [`crate::node`].

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scenario::ObjectId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Access {
    Hit,
    Miss,
}

impl Access {
    pub fn is_hit(self) -> bool {
        self == Access::Hit
    }
}

pub trait CachePolicy: Send {
    fn capacity(&self) -> usize;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Residency check without touching replacement state.
    fn contains(&self, key: ObjectId) -> bool;

    /// Returns true on a hit and records the use.
    fn lookup(&mut self, key: ObjectId) -> bool;

    /// Inserts a key that is not resident, returning the evicted key if any.
    fn admit(&mut self, key: ObjectId) -> Option<ObjectId>;

    fn clear(&mut self);

    /// Resident keys, most to least protected from eviction.
    fn resident(&self) -> Vec<ObjectId>;

    /// Lookup, admitting on a miss.
    fn access(&mut self, key: ObjectId) -> Access {
        if self.lookup(key) {
            Access::Hit
        } else {
            self.admit(key);
            Access::Miss
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    #[default]
    Lru,
    Fifo,
}

impl PolicyKind {
    /// Builds an empty cache. Panics if `capacity` is zero.
    pub fn build(self, capacity: usize) -> Box<dyn CachePolicy> {
        match self {
            PolicyKind::Lru => Box::new(LruCache::new(capacity)),
            PolicyKind::Fifo => Box::new(FifoCache::new(capacity)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Lru => "lru",
            PolicyKind::Fifo => "fifo",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "lru" => Ok(PolicyKind::Lru),
            "fifo" => Ok(PolicyKind::Fifo),
            other => Err(Error::InvalidInput(format!("unknown policy `{other}` (expected lru|fifo)"))),
        }
    }
}

const NIL: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Node {
    key: ObjectId,
    prev: usize,
    next: usize,
}

/// O(1) LRU: a hash index into an arena-backed doubly linked list.
/// `head` is the most recently used entry, `tail` the eviction victim.
#[derive(Debug, Clone)]
pub struct LruCache {
    capacity: usize,
    index: HashMap<ObjectId, usize>,
    nodes: Vec<Node>,
    head: usize,
    tail: usize,
}

impl LruCache {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "cache capacity must be >= 1");
        Self {
            capacity,
            index: HashMap::with_capacity(capacity),
            nodes: Vec::with_capacity(capacity),
            head: NIL,
            tail: NIL,
        }
    }

    fn unlink(&mut self, i: usize) {
        let (prev, next) = (self.nodes[i].prev, self.nodes[i].next);
        if prev == NIL {
            self.head = next;
        } else {
            self.nodes[prev].next = next;
        }
        if next == NIL {
            self.tail = prev;
        } else {
            self.nodes[next].prev = prev;
        }
    }

    fn push_front(&mut self, i: usize) {
        self.nodes[i].prev = NIL;
        self.nodes[i].next = self.head;
        if self.head != NIL {
            self.nodes[self.head].prev = i;
        }
        self.head = i;
        if self.tail == NIL {
            self.tail = i;
        }
    }
}

impl CachePolicy for LruCache {
    fn capacity(&self) -> usize {
        self.capacity
    }

    fn len(&self) -> usize {
        self.index.len()
    }

    fn contains(&self, key: ObjectId) -> bool {
        self.index.contains_key(&key)
    }

    fn lookup(&mut self, key: ObjectId) -> bool {
        match self.index.get(&key) {
            Some(&i) => {
                if self.head != i {
                    self.unlink(i);
                    self.push_front(i);
                }
                true
            }
            None => false,
        }
    }

    fn admit(&mut self, key: ObjectId) -> Option<ObjectId> {
        debug_assert!(!self.index.contains_key(&key));
        if self.index.len() < self.capacity {
            let i = self.nodes.len();
            self.nodes.push(Node { key, prev: NIL, next: NIL });
            self.index.insert(key, i);
            self.push_front(i);
            return None;
        }
        // reuse the victim's slot
        let i = self.tail;
        self.unlink(i);
        let evicted = std::mem::replace(&mut self.nodes[i].key, key);
        self.index.remove(&evicted);
        self.index.insert(key, i);
        self.push_front(i);
        Some(evicted)
    }

    fn clear(&mut self) {
        self.index.clear();
        self.nodes.clear();
        self.head = NIL;
        self.tail = NIL;
    }

    fn resident(&self) -> Vec<ObjectId> {
        let mut out = Vec::with_capacity(self.len());
        let mut i = self.head;
        while i != NIL {
            out.push(self.nodes[i].key);
            i = self.nodes[i].next;
        }
        out
    }
}

/// First-in first-out: hits do not refresh position.
#[derive(Debug, Clone)]
pub struct FifoCache {
    capacity: usize,
    queue: VecDeque<ObjectId>,
}

impl FifoCache {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "cache capacity must be >= 1");
        Self {
            capacity,
            queue: VecDeque::with_capacity(capacity),
        }
    }
}

impl CachePolicy for FifoCache {
    fn capacity(&self) -> usize {
        self.capacity
    }

    fn len(&self) -> usize {
        self.queue.len()
    }

    fn contains(&self, key: ObjectId) -> bool {
        self.queue.contains(&key)
    }

    fn lookup(&mut self, key: ObjectId) -> bool {
        self.contains(key)
    }

    fn admit(&mut self, key: ObjectId) -> Option<ObjectId> {
        let evicted = if self.queue.len() == self.capacity {
            self.queue.pop_back()
        } else {
            None
        };
        self.queue.push_front(key);
        evicted
    }

    fn clear(&mut self) {
        self.queue.clear();
    }

    fn resident(&self) -> Vec<ObjectId> {
        self.queue.iter().copied().collect()
    }
}
