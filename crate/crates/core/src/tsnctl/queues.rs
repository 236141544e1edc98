//! Strict-priority egress queues and slot burst planning.

use std::collections::VecDeque;

use crate::kernel::SimTime;

/// A set of FIFO queues; class 0 has the highest priority.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PriorityQueueSet<T> {
    queues: Vec<VecDeque<T>>,
}

impl<T> PriorityQueueSet<T> {
    pub fn new(classes: usize) -> Self {
        assert!(classes >= 1, "need at least one priority class");
        PriorityQueueSet {
            queues: (0..classes).map(|_| VecDeque::new()).collect(),
        }
    }

    pub fn classes(&self) -> usize {
        self.queues.len()
    }

    /// Append to the tail of `class`. Panics on an unknown class.
    pub fn enqueue(&mut self, item: T, class: usize) {
        let n = self.queues.len();
        self.queues
            .get_mut(class)
            .unwrap_or_else(|| panic!("unknown priority class {class} (have {n})"))
            .push_back(item);
    }

    /// Head of the highest-priority nonempty queue.
    pub fn peek(&self) -> Option<(usize, &T)> {
        self.queues
            .iter()
            .enumerate()
            .find_map(|(c, q)| q.front().map(|item| (c, item)))
    }

    pub fn dequeue(&mut self) -> Option<(usize, T)> {
        self.queues
            .iter_mut()
            .enumerate()
            .find_map(|(c, q)| q.pop_front().map(|item| (c, item)))
    }

    pub fn len(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(VecDeque::is_empty)
    }

    pub fn len_of(&self, class: usize) -> usize {
        self.queues[class].len()
    }
}

/// Frames chosen for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Burst<T> {
    pub items: Vec<(usize, T)>,
    /// The first item alone is longer than the available time.
    pub overrun: bool,
    /// Items left queued.
    pub deferred: usize,
}

/// Dequeue frames in strict priority order while they fit back-to-back in
/// `available`. The first frame is always taken, even if it alone overruns
/// `available`, unless `allow_overrun` is false.
pub fn plan_burst<T>(
    queues: &mut PriorityQueueSet<T>,
    available: SimTime,
    allow_overrun: bool,
    airtime: impl Fn(&T) -> SimTime,
) -> Burst<T> {
    let mut items = Vec::new();
    let mut used = SimTime::ZERO;
    let mut overrun = false;
    while let Some((_, head)) = queues.peek() {
        let t = airtime(head);
        if used + t > available {
            if items.is_empty() && allow_overrun {
                overrun = true;
            } else {
                break;
            }
        }
        used += t;
        items.push(queues.dequeue().expect("peeked"));
        if overrun {
            break;
        }
    }
    Burst {
        items,
        overrun,
        deferred: queues.len(),
    }
}
